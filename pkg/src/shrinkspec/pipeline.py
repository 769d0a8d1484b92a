"""Configured end-to-end runs and report comparison.

A run goes through the stages generate, validate, assemble, solve and
analyze, then writes ``report.json`` and ``spectrum.csv`` (plus optional
mesh, profile and nodal-curve exports) into the output directory. The
report embeds the config verbatim and keeps wall-clock timings under a
single ``timings`` key, so two runs of one config differ only there.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import shrinkers
from .eigen import cluster_indices, multiplicity_clusters, solve_smallest
from .fileio import FORMATS, export_mesh, export_polylines_obj, write_csv
from .mesh import connected_components
from .nodal import courant_check, lambda1_combination_counts, nodal_curve_extract, two_piece_check
from .operator import assemble, coordinate_residual
from .symmetry import (
    eigenspace_defect,
    equivariance_residuals,
    induced_permutation,
    is_invariant,
    parse_group,
)

logger = logging.getLogger(__name__)

LAMBDA1_TARGET = 0.5
# lower/upper ends of the window lambda_1 is known to lie in for
# compact shrinkers, widened by a fixed slack
LAMBDA1_WINDOW = (0.25, 0.5)
WINDOW_SLACK = 0.01

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_STAGE_ERROR = 2

SURFACE_DEFAULTS = {
    "sphere": {"level": 4, "base": "icosahedron"},
    "cylinder": {"z_max": 8.0, "angular_resolution": 64, "axial_resolution": 128},
    "disk": {"R_max": 8.0, "resolution": 64},
    "angenent": {"n_profile": 512, "angular_resolution": 256, "ode_tolerance": 1e-8},
}

CHECK_NAMES = ("shrinker", "lambda1", "coordinates", "courant", "two_piece", "symmetry")

TOLERANCE_DEFAULTS = {
    "shrinker_residual": 0.05,
    "lambda1_rel": 0.02,
    "coordinate_residual": 0.02,
    "equivariance_factor": 10.0,
    "stability_defect": 1e-6,
}

ANALYSIS_DEFAULTS = {
    "courant_count": 10,
    "lambda1_samples": 20,
    "two_piece_planes": 100,
    "export_mesh": False,
    "export_nodal": False,
    "mesh_format": "vtk",
}

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["surface", "solver"],
    "additionalProperties": False,
    "properties": {
        "surface": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": sorted(SURFACE_DEFAULTS)},
                "level": {"type": "integer", "minimum": 0, "maximum": 7},
                "base": {"enum": ["icosahedron", "octahedron"]},
                "z_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 50},
                "R_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 50},
                "angular_resolution": {"type": "integer", "minimum": 3, "maximum": 4096},
                "axial_resolution": {"type": "integer", "minimum": 2, "maximum": 4096},
                "resolution": {"type": "integer", "minimum": 1, "maximum": 1024},
                "n_profile": {"type": "integer", "minimum": 8, "maximum": 8192, "multipleOf": 2},
                "ode_tolerance": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
            },
            "allOf": [
                {
                    "if": {"properties": {"kind": {"const": kind}}},
                    "then": {"propertyNames": {"enum": ["kind", *keys]}},
                }
                for kind, keys in SURFACE_DEFAULTS.items()
            ],
        },
        "group": {
            "anyOf": [
                {"type": "null"},
                {"type": "string", "pattern": r"^(dihedral|prismatic):([2-9]|[1-5][0-9]|6[0-4])$"},
            ]
        },
        "solver": {
            "type": "object",
            "required": ["seed"],
            "additionalProperties": False,
            "properties": {
                "k": _POS_INT,
                "tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2},
                "max_iter": _POS_INT,
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "checks": {
            "anyOf": [
                {"const": "all"},
                {"type": "array", "items": {"enum": list(CHECK_NAMES)}, "uniqueItems": True},
            ]
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "courant_count": _POS_INT,
                "lambda1_samples": _POS_INT,
                "two_piece_planes": _POS_INT,
                "export_mesh": {"type": "boolean"},
                "export_nodal": {"type": "boolean"},
                "mesh_format": {"enum": list(FORMATS)},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {name: _POS_NUM for name in TOLERANCE_DEFAULTS},
        },
        "normalization": _POS_NUM,
        "output": {"type": "string", "minLength": 1},
    },
}


class ConfigError(ValueError):
    """The run configuration does not match the schema."""


class StageError(RuntimeError):
    """A pipeline stage raised; ``stage`` names it."""

    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with defaults filled in.

    ``raw`` is the mapping exactly as given, kept for the report.
    """

    raw: dict
    surface: dict
    group: str | None
    k: int
    tol: float
    max_iter: int
    seed: int
    checks: tuple
    analysis: dict
    tolerances: dict
    normalization: float
    output: str | None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(map(str, exc.absolute_path)) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from None
        kind = data["surface"]["kind"]
        surface = {**SURFACE_DEFAULTS[kind], **data["surface"]}
        solver = data["solver"]
        checks = data.get("checks", "all")
        return cls(
            raw=copy.deepcopy(data),
            surface=surface,
            group=data.get("group"),
            k=solver.get("k", 10),
            tol=solver.get("tol", 1e-8),
            max_iter=solver.get("max_iter", 1000),
            seed=solver["seed"],
            checks=tuple(CHECK_NAMES if checks == "all" else checks),
            analysis={**ANALYSIS_DEFAULTS, **data.get("analysis", {})},
            tolerances={**TOLERANCE_DEFAULTS, **data.get("tolerances", {})},
            normalization=data.get("normalization", shrinkers.AREA_NORMALIZATION),
            output=data.get("output"),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)


def parse_surface(spec: str) -> dict:
    """``"cylinder:z_max=10,axial_resolution=160"`` -> surface mapping."""
    kind, _, rest = spec.partition(":")
    out = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"surface parameter {item!r} is not key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _round_up(value: int, n: int) -> int:
    return n * math.ceil(value / n)


def build_surface(surface: dict, group: str | None = None):
    """Generate the mesh, plus the profile curve for the torus.

    Rotational meshes are made with an angular resolution that is a
    multiple of the group parameter so that the group acts on them.
    """
    params = {**SURFACE_DEFAULTS[surface["kind"]], **surface}
    kind = params.pop("kind")
    n = parse_group(group).n if group else None
    if n and "angular_resolution" in params:
        params["angular_resolution"] = _round_up(params["angular_resolution"], n)
    if kind == "sphere":
        return shrinkers.make_sphere(params["level"], base=params["base"]), None, params
    if kind == "cylinder":
        return shrinkers.make_cylinder(**params), None, params
    if kind == "disk":
        return shrinkers.make_disk(**params), None, params
    profile = shrinkers.shoot_angenent_profile(
        ode_tolerance=params["ode_tolerance"], n_points=params["n_profile"]
    )
    return shrinkers.revolve(profile, params["angular_resolution"]), profile, params


@dataclass
class RunReport:
    data: dict
    exit_code: int
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, default=_to_builtin)


def _to_builtin(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _lambda1_verdict(spectrum, rel_tol):
    lam1 = float(spectrum.eigenvalues[1])
    rel = abs(lam1 - LAMBDA1_TARGET) / LAMBDA1_TARGET
    lo, hi = LAMBDA1_WINDOW
    in_window = lo - WINDOW_SLACK <= lam1 <= hi + WINDOW_SLACK
    return {
        "value": lam1,
        "target": LAMBDA1_TARGET,
        "rel_error": rel,
        "rel_tol": rel_tol,
        "in_window": in_window,
        "passed": bool(rel <= rel_tol and in_window),
    }


def _symmetry_section(mesh, ops, spectrum, group_spec, tol):
    group = parse_group(group_spec)
    axioms = group.verify_axioms()
    invariant = is_invariant(mesh, group)
    out = {
        "group": group_spec,
        "order": group.order,
        "axioms": axioms,
        "invariant": invariant,
        "max_equivariance_residual": None,
        "lambda1_stability_defect": None,
    }
    if not invariant:
        return out, False
    cluster = next(c for c in cluster_indices(spectrum) if 1 in c)
    V = spectrum.eigenvectors[:, cluster]
    eq, stab = 0.0, 0.0
    for g in group:
        perm = induced_permutation(mesh, g)
        eq = max(eq, float(equivariance_residuals(ops, spectrum, perm).max()))
        stab = max(stab, eigenspace_defect(ops, V, perm))
    out["max_equivariance_residual"] = eq
    out["lambda1_stability_defect"] = stab
    passed = (axioms["passed"] and eq <= tol["equivariance_factor"] * spectrum.tol
              and stab <= tol["stability_defect"])
    return out, bool(passed)


def run(config: RunConfig | dict, output=None) -> RunReport:
    """Execute one configured run and write its artifacts.

    Never raises for stage failures: the report then carries an
    ``error`` entry naming the stage and the exit code is nonzero.
    """
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    out_dir = Path(output or config.output or "shrinkspec_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    data: dict = {"config": config.raw, "checks": {}, "error": None}
    artifacts: list = []
    tol = config.tolerances
    enabled = set(config.checks)
    checks = data["checks"]

    try:
        with _stage("generate", timings):
            mesh, profile, params = build_surface(config.surface, config.group)
            data["surface"] = {
                "kind": config.surface["kind"],
                "parameters": params,
                "n_vertices": mesh.n_vertices,
                "n_faces": mesh.n_faces,
                "euler_characteristic": mesh.euler_characteristic(),
                "boundary_vertices": int(mesh.boundary.sum()),
            }
            if profile is not None:
                data["surface"]["profile"] = {
                    "r0": profile.r0,
                    "closure_defect": profile.closure_defect,
                    "length": profile.length,
                }
                path = out_dir / "profile.csv"
                write_csv(path, ["s", "r", "z", "theta"], profile.rows())
                artifacts.append(str(path))

        with _stage("validate", timings):
            n_comp = connected_components(mesh)[1]
            rep = shrinkers.shrinker_residual(mesh, config.normalization)
            data["shrinker"] = {
                "max_abs_residual": rep.max_abs_residual,
                "mean_abs_residual": rep.mean_abs_residual,
                "gaussian_area": rep.weighted_area,
                "normalization": config.normalization,
                "skipped_vertices": rep.n_skipped,
                "components": n_comp,
            }
            if "shrinker" in enabled:
                checks["shrinker"] = bool(n_comp == 1 and rep.max_abs_residual <= tol["shrinker_residual"])

        with _stage("assemble", timings):
            ops = assemble(mesh)

        with _stage("solve", timings):
            spectrum = solve_smallest(ops, k=config.k, tol=config.tol,
                                      max_iter=config.max_iter, seed=config.seed)
            data["spectrum"] = {
                "table": spectrum.table(),
                "clusters": [{"mean": m, "multiplicity": c} for m, c in multiplicity_clusters(spectrum)],
                "iterations": spectrum.iterations,
                "converged": spectrum.converged,
                "tol": spectrum.tol,
            }
            checks["solver_converged"] = spectrum.converged
            path = out_dir / "spectrum.csv"
            spectrum.to_csv(path)
            artifacts.append(str(path))

        with _stage("analyze", timings):
            _analyze(config, mesh, ops, spectrum, data, enabled, out_dir, artifacts)
    except StageError as exc:
        logger.error("%s", exc)
        data["error"] = {"stage": exc.stage, "type": type(exc.error).__name__, "message": str(exc.error)}

    data["passed"] = data["error"] is None and all(checks.values())
    data["timings"] = timings
    exit_code = (EXIT_STAGE_ERROR if data["error"] is not None
                 else EXIT_OK if data["passed"] else EXIT_CHECK_FAILED)
    report = RunReport(data, exit_code, artifacts)
    path = out_dir / "report.json"
    path.write_text(report.to_json() + "\n")
    artifacts.append(str(path))
    return report


def _analyze(config, mesh, ops, spectrum, data, enabled, out_dir, artifacts):
    tol = config.tolerances
    checks = data["checks"]
    an = config.analysis
    has_lambda1 = len(spectrum) >= 2

    coords = [coordinate_residual(ops, axis) for axis in range(3)]
    data["coordinate_residuals"] = coords
    if "coordinates" in enabled:
        checks["coordinates"] = bool(max(coords) <= tol["coordinate_residual"])

    data["lambda1"] = _lambda1_verdict(spectrum, tol["lambda1_rel"]) if has_lambda1 else None
    if "lambda1" in enabled and has_lambda1:
        checks["lambda1"] = data["lambda1"]["passed"]

    if "courant" in enabled and spectrum.converged:
        entries = courant_check(mesh, spectrum, count=an["courant_count"])
        data["courant"] = [vars(e) for e in entries]
        combos = lambda1_combination_counts(mesh, spectrum, an["lambda1_samples"], config.seed) if has_lambda1 else []
        data["lambda1_combination_counts"] = combos
        checks["courant"] = bool(all(e.passed for e in entries) and all(c == 2 for c in combos))

    if "two_piece" in enabled:
        tp = two_piece_check(mesh, an["two_piece_planes"], config.seed)
        data["two_piece"] = tp.to_json()
        checks["two_piece"] = tp.passed

    if config.group:
        data["symmetry"], ok = _symmetry_section(mesh, ops, spectrum, config.group, tol)
        if "symmetry" in enabled:
            checks["symmetry"] = ok
        path = out_dir / "group.json"
        path.write_text(json.dumps(parse_group(config.group).to_json(), indent=2) + "\n")
        artifacts.append(str(path))

    if an["export_mesh"]:
        fields = {f"u{i}": spectrum.vector(i) for i in range(len(spectrum))}
        path = out_dir / f"mesh.{an['mesh_format']}"
        export_mesh(mesh, path, fields=fields)
        artifacts.append(str(path))
    if an["export_nodal"] and has_lambda1:
        curves = nodal_curve_extract(mesh, spectrum.vector(1))
        data["nodal_curves"] = {"closed": curves.n_closed, "open": curves.n_open}
        path = out_dir / "nodal_u1.obj"
        export_polylines_obj(curves.polylines, curves.closed, path)
        artifacts.append(str(path))


DEFAULT_COMPARE_TOLERANCES = {"eigenvalue_rtol": 1e-3, "lambda1_rtol": 5e-3}


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if a == b else abs(a - b) / scale if scale > 1e-12 else abs(a - b)


def compare(report_a: dict, report_b: dict, tolerances: dict | None = None) -> dict:
    """Eigenvalue-wise relative differences between two run reports.

    Only nonzero differences are listed, so identical reports give an
    empty ``differences`` list. Tables of different length are compared
    on their common prefix and flagged, not rejected.
    """
    tol = {**DEFAULT_COMPARE_TOLERANCES, **(tolerances or {})}
    kind_a = report_a.get("surface", {}).get("kind")
    kind_b = report_b.get("surface", {}).get("kind")
    if kind_a != kind_b:
        raise ValueError(f"reports are for different surfaces: {kind_a} vs {kind_b}")
    lam_a = [row["eigenvalue"] for row in report_a["spectrum"]["table"]]
    lam_b = [row["eigenvalue"] for row in report_b["spectrum"]["table"]]
    diffs, violations = [], []
    for i, (a, b) in enumerate(zip(lam_a, lam_b)):
        rel = _rel(a, b)
        if rel == 0.0:
            continue
        entry = {"index": i, "a": a, "b": b, "rel_diff": rel}
        diffs.append(entry)
        limit = tol["lambda1_rtol"] if i == 1 else tol["eigenvalue_rtol"]
        if rel > limit:
            violations.append(entry)
    lambda1 = _rel(lam_a[1], lam_b[1]) if min(len(lam_a), len(lam_b)) > 1 else None
    return {
        "surface": kind_a,
        "shape_mismatch": len(lam_a) != len(lam_b),
        "lengths": [len(lam_a), len(lam_b)],
        "lambda1_rel_diff": lambda1,
        "tolerances": tol,
        "differences": diffs,
        "violations": violations,
        "passed": not violations,
    }
