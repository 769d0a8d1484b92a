"""Command-line driver.

Examples
--------
::

    shrinkspec generate --surface sphere:level=5 --out sphere.vtk
    shrinkspec assemble --surface cylinder --out cyl
    shrinkspec solve --surface disk --k 10 --seed 0 --out disk_run
    shrinkspec analyze --surface angenent --group dihedral:8 --seed 0 --out torus_run
    shrinkspec run config.json --out run_dir
    shrinkspec compare run_a/report.json run_b/report.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .eigen import solve_smallest
from .fileio import FORMATS, export_mesh, write_csv
from .operator import assemble
from .pipeline import (
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
from .shrinkers import shrinker_residual


def _add_surface(p):
    p.add_argument("--surface", required=True,
                   help="kind[:key=value,...], kind one of sphere, cylinder, disk, angenent")
    p.add_argument("--group", default=None, help="dihedral:n or prismatic:n")


def _add_solver(p):
    p.add_argument("--k", type=int, default=10, help="number of eigenpairs, constant mode included")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinkspec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a shrinker mesh")
    _add_surface(p)
    p.add_argument("--out", required=True, help="mesh file path")
    p.add_argument("--format", choices=FORMATS, default=None, help="default: from the suffix")

    p = sub.add_parser("assemble", help="write K and M in Matrix Market format")
    _add_surface(p)
    p.add_argument("--out", required=True, help="prefix for <prefix>_K.mtx and <prefix>_M.mtx")

    p = sub.add_parser("solve", help="write the smallest eigenpairs")
    _add_surface(p)
    _add_solver(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="full pipeline from command-line flags")
    _add_surface(p)
    _add_solver(p)
    p.add_argument("--planes", type=int, default=100, help="random planes for the two-piece test")
    p.add_argument("--export-mesh", action="store_true")
    p.add_argument("--export-nodal", action="store_true")
    p.add_argument("--format", choices=FORMATS, default="vtk", help="mesh export format")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="overrides the config output directory")

    p = sub.add_parser("compare", help="compare the eigenvalue tables of two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--rtol", type=float, default=None, help="relative tolerance for all eigenvalues")
    p.add_argument("--out", default=None, help="write the diff as JSON here")
    return parser


def _generate(args):
    mesh, profile, params = build_surface(parse_surface(args.surface), args.group)
    out = Path(args.out)
    export_mesh(mesh, out, args.format)
    if profile is not None:
        write_csv(out.with_name(out.stem + "_profile.csv"), ["s", "r", "z", "theta"], profile.rows())
    rep = shrinker_residual(mesh)
    print(json.dumps({
        "parameters": params,
        "n_vertices": mesh.n_vertices,
        "n_faces": mesh.n_faces,
        "max_abs_residual": rep.max_abs_residual,
        "gaussian_area": rep.weighted_area,
    }, indent=2))
    return EXIT_OK


def _assemble(args):
    mesh, _, _ = build_surface(parse_surface(args.surface), args.group)
    for path in assemble(mesh).export_matrix_market(args.out):
        print(path)
    return EXIT_OK


def _solve(args):
    mesh, _, _ = build_surface(parse_surface(args.surface), args.group)
    spectrum = solve_smallest(assemble(mesh), k=args.k, tol=args.tol,
                              max_iter=args.max_iter, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spectrum.to_csv(out / "spectrum.csv")
    (out / "spectrum.json").write_text(spectrum.to_json() + "\n")
    for row in spectrum.table():
        print(f"{row['index']:3d}  {row['eigenvalue']:.10f}  {row['residual']:.2e}")
    return EXIT_OK if spectrum.converged else EXIT_CHECK_FAILED


def _report(report):
    data = report.data
    if data["error"]:
        err = data["error"]
        print(f"stage {err['stage']} failed: {err['type']}: {err['message']}", file=sys.stderr)
    for name, ok in sorted(data["checks"].items()):
        print(f"{name:18s} {'pass' if ok else 'FAIL'}")
    if data.get("lambda1"):
        print(f"lambda_1 = {data['lambda1']['value']:.8f}")
    return report.exit_code


def _analyze(args):
    config = {
        "surface": parse_surface(args.surface),
        "group": args.group,
        "solver": {"k": args.k, "tol": args.tol, "max_iter": args.max_iter, "seed": args.seed},
        "analysis": {
            "two_piece_planes": args.planes,
            "export_mesh": args.export_mesh,
            "export_nodal": args.export_nodal,
            "mesh_format": args.format,
        },
        "output": args.out,
    }
    return _report(run(RunConfig.from_dict(config)))


def _run(args):
    return _report(run(RunConfig.load(args.config), output=args.out))


def _compare(args):
    a = json.loads(Path(args.report_a).read_text())
    b = json.loads(Path(args.report_b).read_text())
    tol = None if args.rtol is None else {"eigenvalue_rtol": args.rtol, "lambda1_rtol": args.rtol}
    diff = compare(a, b, tol)
    text = json.dumps(diff, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if diff["passed"] else EXIT_CHECK_FAILED


COMMANDS = {
    "generate": _generate,
    "assemble": _assemble,
    "solve": _solve,
    "analyze": _analyze,
    "run": _run,
    "compare": _compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_STAGE_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
