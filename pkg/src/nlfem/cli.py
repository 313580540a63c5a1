"""Command line driver: ``nlfem convergence | geom-error | patch | assemble``.

Exit codes: 0 success, 2 invalid arguments, 3 solver failure, 4 mesh
validation failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, MeshValidationError, SolverError
from .geometry import BallStrategy

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_SOLVER = 3
EXIT_MESH = 4

FINE_LIMIT = 80
CLI_STRATEGIES = [s.value for s in BallStrategy if s is not BallStrategy.SHIFTED]


def _common(p: argparse.ArgumentParser, grids_default: str | None = "uniform:10,20,40,80"):
    p.add_argument("--ball", default="exactcaps", help="ball strategy: " + ", ".join(CLI_STRATEGIES))
    p.add_argument("--delta", type=float, default=0.1, help="horizon (default 0.1)")
    p.add_argument("--grids", default=grids_default,
                   help="uniform:10,20 | squared:10,20 | files:a.nlmesh,b.nlmesh")
    p.add_argument("--cap-triangles", type=int, default=1, help="triangles per cap for approxcaps")
    p.add_argument("--threads", type=int, default=1, help="assembly worker threads")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-fine", action="store_true",
                   help=f"permit grid levels above n={FINE_LIMIT} (slow)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlfem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="L2 convergence study on the manufactured solution")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-12, help="relative CG residual")
    p.add_argument("--out", type=Path, help="write the CSV report here instead of stdout")
    p.add_argument("--relative-times", action="store_true",
                   help="print assembly times as percent of the largest")

    p = sub.add_parser("geom-error", help="sup |B delta B_h| over sampled centers, and its rate")
    _common(p)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--resolution", type=int, default=4_000_000, help="sample points per ball")
    p.add_argument("--exact", action="store_true", help="use area identities instead of sampling")

    p = sub.add_parser("patch", help="constant, zero and linear patch tests")
    _common(p, "uniform:10")
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("assemble", help="assemble one mesh and export the system")
    p.add_argument("--mesh", type=Path, help="mesh file (nlmesh format)")
    p.add_argument("--grid", help="build a grid instead, e.g. uniform:20")
    p.add_argument("--ball", default="exactcaps")
    p.add_argument("--delta", type=float, help="override the horizon stored in the mesh file")
    p.add_argument("--cap-triangles", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--export-matrix", type=Path)
    p.add_argument("--export-rhs", type=Path)
    p.add_argument("--svg", type=Path, help="debug picture of one ball decomposition")
    p.add_argument("--svg-center", type=float, nargs=2, default=(0.5, 0.5), metavar=("X1", "X2"))
    return parser


def _check_levels(grids, allow_fine: bool):
    if grids.kind != "files" and not allow_fine and max(grids.levels) > FINE_LIMIT:
        raise InvalidArgumentError(f"grid levels above {FINE_LIMIT} need --allow-fine")


def _strategy(name: str) -> BallStrategy:
    return BallStrategy.parse(name)


def cmd_convergence(args, out) -> int:
    from .harness import StudyConfig, run_convergence

    cfg = StudyConfig(args.grids, _strategy(args.ball), args.delta, args.cap_triangles, args.tol,
                      args.out, args.threads, args.seed)
    _check_levels(cfg.grids, args.allow_fine)
    report = run_convergence(cfg, progress=lambda s: print(s, file=sys.stderr))
    if args.out is None:
        out.write(report.to_csv())
    if args.relative_times:
        for r, pct in zip(report.rows, report.relative_times()):
            print(f"J={r.J_omega:<7d} time={pct:6.2f}%", file=out)
    return EXIT_OK


def cmd_geom_error(args, out) -> int:
    from .harness import StudyConfig, run_geometric_error

    cfg = StudyConfig(args.grids, _strategy(args.ball), args.delta, args.cap_triangles,
                      workers=args.threads, seed=args.seed)
    _check_levels(cfg.grids, args.allow_fine)
    rep = run_geometric_error(cfg, args.samples, args.resolution, "exact" if args.exact else "sampling")
    out.write(rep.to_csv())
    return EXIT_OK


def cmd_patch(args, out) -> int:
    from .harness import StudyConfig, run_patch_tests

    names = CLI_STRATEGIES if args.ball == "all" else [args.ball]
    cfg = StudyConfig(args.grids, _strategy(names[0]), args.delta, args.cap_triangles, args.tol,
                      workers=args.threads)
    _check_levels(cfg.grids, args.allow_fine)
    rep = run_patch_tests(cfg, names)
    for line in rep.lines():
        print(line, file=out)
    return EXIT_OK if rep.passed else 1


def cmd_assemble(args, out) -> int:
    from .assembly import Kernel, assemble, manufactured_case
    from .geometry import decompose_ball, decomposition_svg
    from .harness import GridSpec
    from .mesh import load_mesh

    if (args.mesh is None) == (args.grid is None):
        raise InvalidArgumentError("give exactly one of --mesh or --grid")
    if args.mesh is not None:
        if not args.mesh.is_file():
            raise InvalidArgumentError(f"no such mesh file: {args.mesh}")
        mesh = load_mesh(args.mesh, args.delta)
    else:
        spec = GridSpec.parse(args.grid)
        if len(spec.levels) != 1:
            raise InvalidArgumentError("--grid takes a single level")
        mesh = next(spec.build(0.1 if args.delta is None else args.delta))
    strategy = _strategy(args.ball)
    _, data, _ = manufactured_case(mesh.delta)
    system = assemble(mesh, Kernel.constant(mesh.delta), data, strategy, args.cap_triangles, args.threads)
    A = system.matrix
    print(f"J_omega={system.n_unknowns} nnz={A.nnz} h_max={mesh.h_max:.6g} "
          f"assembly_seconds={system.assembly_seconds:.3f}", file=out)
    if args.export_matrix is not None:
        system.export_matrix(args.export_matrix)
    if args.export_rhs is not None:
        system.export_rhs(args.export_rhs)
    if args.svg is not None:
        dec = decompose_ball(mesh, np.array(args.svg_center), strategy, args.cap_triangles)
        args.svg.write_text(decomposition_svg(dec, mesh))
    return EXIT_OK


COMMANDS = {"convergence": cmd_convergence, "geom-error": cmd_geom_error,
            "patch": cmd_patch, "assemble": cmd_assemble}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ARGS if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.command](args, out)
    except MeshValidationError as exc:
        print(f"nlfem: mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SolverError as exc:
        print(f"nlfem: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidArgumentError, OSError) as exc:
        print(f"nlfem: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
