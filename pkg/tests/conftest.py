"""Shared meshes and spectra, built once per session."""

import pytest

from shrinkspec.eigen import solve_smallest
from shrinkspec.operator import assemble
from shrinkspec.shrinkers import make_angenent_torus, make_cylinder, make_disk, make_sphere

SOLVER_TOL = 1e-8
K_PAIRS = 10


class Surface:
    def __init__(self, name, mesh, k=K_PAIRS):
        self.name = name
        self.mesh = mesh
        self.k = k
        self._ops = None
        self._spectrum = None

    @property
    def ops(self):
        if self._ops is None:
            self._ops = assemble(self.mesh)
        return self._ops

    @property
    def spectrum(self):
        if self._spectrum is None:
            self._spectrum = solve_smallest(self.ops, k=self.k, tol=SOLVER_TOL, seed=0)
        return self._spectrum


@pytest.fixture(scope="session")
def sphere4():
    return Surface("sphere4", make_sphere(4))


@pytest.fixture(scope="session")
def sphere5():
    return Surface("sphere5", make_sphere(5))


@pytest.fixture(scope="session")
def cylinder8():
    return Surface("cylinder8", make_cylinder(8.0, 64, 128))


@pytest.fixture(scope="session")
def cylinder10():
    # same axial spacing as the z_max = 8 mesh
    return Surface("cylinder10", make_cylinder(10.0, 64, 160), k=4)


@pytest.fixture(scope="session")
def disk():
    return Surface("disk", make_disk(8.0, 64))


@pytest.fixture(scope="session")
def torus():
    return Surface("torus", make_angenent_torus(512, 256, 1e-8))


@pytest.fixture(scope="session")
def four_surfaces(sphere5, cylinder8, disk, torus):
    return [sphere5, cylinder8, disk, torus]


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], outcome, props.get("measured", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, measured in sorted(lines):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}  {measured}".rstrip())
