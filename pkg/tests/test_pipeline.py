import csv
import json

import pytest

from shrinkspec.cli import main
from shrinkspec.fileio import import_mesh
from shrinkspec.pipeline import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_STAGE_ERROR,
    ConfigError,
    RunConfig,
    build_surface,
    compare,
    parse_surface,
    run,
)


def sphere_config(level=4, k=5, **extra):
    return {"surface": {"kind": "sphere", "level": level}, "solver": {"k": k, "seed": 0},
            "checks": "all", **extra}


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    return run(sphere_config(), output=tmp_path_factory.mktemp("sphere"))


def strip_timings(report_text):
    data = json.loads(report_text)
    data.pop("timings")
    return json.dumps(data, sort_keys=True)


# ------------------------------------------------------------------ config

@pytest.mark.parametrize("bad", [
    {"surface": {"kind": "sphere"}, "solver": {"k": 0, "seed": 0}},
    {"surface": {"kind": "sphere"}, "solver": {"k": 5}},
    {"surface": {"kind": "sphere", "z_max": 3}, "solver": {"seed": 0}},
    {"surface": {"kind": "torus"}, "solver": {"seed": 0}},
    {"surface": {"kind": "sphere"}, "solver": {"seed": 0}, "group": "dihedral:1"},
    {"surface": {"kind": "sphere"}, "solver": {"seed": 0}, "checks": ["bogus"]},
    {"surface": {"kind": "angenent", "n_profile": 511}, "solver": {"seed": 0}},
    {"surface": {"kind": "sphere"}, "solver": {"seed": 0}, "extra": 1},
])
def test_schema_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_defaults_filled():
    cfg = RunConfig.from_dict({"surface": {"kind": "cylinder"}, "solver": {"seed": 3}})
    assert cfg.surface == {"kind": "cylinder", "z_max": 8.0, "angular_resolution": 64,
                           "axial_resolution": 128}
    assert (cfg.k, cfg.tol, cfg.seed) == (10, 1e-8, 3)
    assert "courant" in cfg.checks
    assert cfg.raw == {"surface": {"kind": "cylinder"}, "solver": {"seed": 3}}


def test_parse_surface():
    assert parse_surface("cylinder:z_max=10,axial_resolution=160") == {
        "kind": "cylinder", "z_max": 10, "axial_resolution": 160}
    assert parse_surface("sphere:base=octahedron") == {"kind": "sphere", "base": "octahedron"}
    with pytest.raises(ConfigError):
        parse_surface("sphere:level")


def test_group_rounds_angular_resolution():
    mesh, _, params = build_surface({"kind": "cylinder", "angular_resolution": 64,
                                     "axial_resolution": 8}, "dihedral:7")
    assert params["angular_resolution"] == 70
    assert mesh.n_vertices == 70 * 9


# --------------------------------------------------------------------- run

def test_sphere_example(sphere_run, tmp_path):
    data = sphere_run.data
    assert sphere_run.exit_code == EXIT_OK
    assert 0.495 <= data["lambda1"]["value"] <= 0.505
    assert data["config"] == sphere_config()
    assert all(data["checks"].values())
    assert data["error"] is None
    assert [c["multiplicity"] for c in data["spectrum"]["clusters"]][:2] == [1, 3]
    assert {"generate", "validate", "assemble", "solve", "analyze"} <= set(data["timings"])
    names = {p.rsplit("/", 1)[-1] for p in sphere_run.artifacts}
    assert {"report.json", "spectrum.csv"} <= names


def test_spectrum_csv_matches_report(sphere_run):
    path = next(p for p in sphere_run.artifacts if p.endswith("spectrum.csv"))
    rows = list(csv.DictReader(open(path)))
    assert [float(r["eigenvalue"]) for r in rows] == [
        r["eigenvalue"] for r in sphere_run.data["spectrum"]["table"]]


def test_report_is_deterministic(tmp_path):
    cfg = sphere_config(level=3, k=6)
    a = run(cfg, output=tmp_path / "a")
    b = run(cfg, output=tmp_path / "b")
    text_a = (tmp_path / "a" / "report.json").read_text()
    text_b = (tmp_path / "b" / "report.json").read_text()
    assert strip_timings(text_a) == strip_timings(text_b)
    assert a.data["spectrum"] == b.data["spectrum"]


def test_failed_check_exit_code(tmp_path):
    cfg = sphere_config(level=3, k=4, tolerances={"lambda1_rel": 1e-9})
    rep = run(cfg, output=tmp_path)
    assert rep.exit_code == EXIT_CHECK_FAILED
    assert rep.data["checks"]["lambda1"] is False
    assert rep.data["checks"]["courant"] is True


def test_disabled_checks_do_not_count(tmp_path):
    cfg = sphere_config(level=3, k=4, tolerances={"lambda1_rel": 1e-9}, checks=["courant"])
    assert run(cfg, output=tmp_path).exit_code == EXIT_OK


def test_stage_failure_keeps_partial_report(tmp_path):
    cfg = {"surface": {"kind": "sphere", "level": 0}, "solver": {"k": 8, "seed": 0}}
    rep = run(cfg, output=tmp_path)
    assert rep.exit_code == EXIT_STAGE_ERROR
    assert rep.data["error"]["stage"] == "solve"
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["surface"]["n_vertices"] == 12
    assert "shrinker" in saved


def test_exports(tmp_path):
    cfg = sphere_config(level=3, k=4, analysis={"export_mesh": True, "export_nodal": True,
                                                "mesh_format": "json"})
    rep = run(cfg, output=tmp_path)
    mesh, fields = import_mesh(tmp_path / "mesh.json")
    assert set(fields) == {"u0", "u1", "u2", "u3"}
    assert (tmp_path / "nodal_u1.obj").exists()
    assert rep.data["nodal_curves"] == {"closed": 1, "open": 0}


def test_angenent_dihedral7_example(tmp_path):
    cfg = {"surface": {"kind": "angenent"}, "group": "dihedral:7",
           "solver": {"seed": 0}, "checks": "all"}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    code = main(["run", str(path), "--out", str(tmp_path / "out")])
    data = json.loads((tmp_path / "out" / "report.json").read_text())
    assert data["symmetry"]["invariant"]
    assert data["symmetry"]["order"] == 14
    assert 0.49 <= data["lambda1"]["value"] <= 0.51
    assert data["surface"]["parameters"]["angular_resolution"] % 7 == 0
    assert (tmp_path / "out" / "profile.csv").exists()
    assert code == EXIT_OK


# ----------------------------------------------------------------- compare

def test_compare_identical(sphere_run):
    diff = compare(sphere_run.data, sphere_run.data)
    assert diff["differences"] == [] and diff["passed"] and not diff["shape_mismatch"]


def test_compare_sphere_refinement(sphere_run, tmp_path):
    fine = run(sphere_config(level=5, k=5, checks=["lambda1"]), output=tmp_path)
    diff = compare(sphere_run.data, fine.data)
    assert diff["lambda1_rel_diff"] <= 5e-3


def test_compare_cylinder_truncation(tmp_path):
    base = {"solver": {"k": 4, "seed": 0}, "checks": ["lambda1"]}
    a = run({**base, "surface": {"kind": "cylinder"}}, output=tmp_path / "a")
    b = run({**base, "surface": {"kind": "cylinder", "z_max": 10, "axial_resolution": 160}},
            output=tmp_path / "b")
    assert compare(a.data, b.data)["lambda1_rel_diff"] <= 1e-3


def test_compare_shape_mismatch_and_kinds(sphere_run):
    short = json.loads(json.dumps(sphere_run.data))
    short["spectrum"]["table"] = short["spectrum"]["table"][:3]
    diff = compare(sphere_run.data, short)
    assert diff["shape_mismatch"] and diff["differences"] == []
    other = json.loads(json.dumps(sphere_run.data))
    other["surface"]["kind"] = "disk"
    with pytest.raises(ValueError):
        compare(sphere_run.data, other)


def test_compare_flags_violations(sphere_run):
    shifted = json.loads(json.dumps(sphere_run.data))
    shifted["spectrum"]["table"][2]["eigenvalue"] *= 1.01
    diff = compare(sphere_run.data, shifted)
    assert [d["index"] for d in diff["violations"]] == [2]
    assert not diff["passed"]


# --------------------------------------------------------------------- CLI

def test_cli_malformed_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"surface": {"kind": "sphere"}, "solver": {"k": 0, "seed": 0}}))
    assert main(["run", str(path)]) == EXIT_STAGE_ERROR
    assert "solver/k" in capsys.readouterr().err
    path.write_text("{not json")
    assert main(["run", str(path)]) == EXIT_STAGE_ERROR


def test_cli_generate_assemble_solve(tmp_path, capsys):
    mesh_path = tmp_path / "torus.off"
    assert main(["generate", "--surface", "angenent:n_profile=64,angular_resolution=32",
                 "--out", str(mesh_path)]) == EXIT_OK
    assert (tmp_path / "torus_profile.csv").exists()
    mesh, _ = import_mesh(mesh_path)
    assert mesh.n_vertices == 64 * 32

    prefix = tmp_path / "sph"
    assert main(["assemble", "--surface", "sphere:level=1", "--out", str(prefix)]) == EXIT_OK
    assert (tmp_path / "sph_K.mtx").exists() and (tmp_path / "sph_M.mtx").exists()

    out = tmp_path / "solve"
    assert main(["solve", "--surface", "sphere:level=2", "--k", "4", "--seed", "0",
                 "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "spectrum.json").read_text())["converged"]
    capsys.readouterr()


def test_cli_analyze_and_compare(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["analyze", "--surface", "disk", "--k", "6", "--seed", "0", "--planes", "10"]
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    diff_path = tmp_path / "diff.json"
    assert main(["compare", str(a / "report.json"), str(b / "report.json"),
                 "--out", str(diff_path)]) == EXIT_OK
    assert json.loads(diff_path.read_text())["differences"] == []
    assert "two_piece" in capsys.readouterr().out


def test_cli_requires_seed():
    with pytest.raises(SystemExit):
        main(["solve", "--surface", "sphere", "--out", "x"])
