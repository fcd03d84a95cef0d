"""Command line entry point: ``adjopt solve`` and ``adjopt benchmark``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import ocp, shapeopt
from .benchmark import DEFAULT_SIZES, report_csv, run_benchmark, spread
from .config import ConfigError, RunConfig, load_config
from .export import export_history, export_vtk


def _sizes(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sizes: expected comma-separated integers, got {text!r}")
    if any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError("--sizes: mesh sizes must be positive")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adjopt", description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for the global numpy RNG (randomized checks only)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one problem described by an INI file")
    solve.add_argument("--config", required=True, type=Path)
    solve.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides [Output] directory)")
    solve.add_argument("--export-vtk", action="store_true")
    solve.add_argument("--export-history", action="store_true")

    bench = sub.add_parser("benchmark", help="reproduce an iteration-count table")
    bench.add_argument("--table", required=True, choices=("2", "3"))
    bench.add_argument("--sizes", type=_sizes, default=list(DEFAULT_SIZES),
                       help="comma-separated mesh sizes (default 16,32,64,128)")
    bench.add_argument("--solver", choices=("cg", "direct"), default=None,
                       help="linear solver (default: cg for table 2, direct for table 3)")
    bench.add_argument("--out", type=Path, default=None, help="directory for report.csv")
    return parser


def solve(config: RunConfig, out: Path, export_vtk_flag: bool, export_history_flag: bool) -> int:
    opt = config.optimization
    if config.problem == "ocp":
        problem = ocp.benchmark_problem(config.mesh_n)
        u, y, history = ocp.optimize(problem, opt)
        mesh, fields = problem.mesh, [("state", y), ("control", u)]
    else:
        sg = config.shape_gradient
        problem = shapeopt.benchmark_problem(config.mesh_n, mu=sg.mu, lam=sg.lam, delta=sg.delta,
                                             bdry_def=sg.shape_bdry_def,
                                             bdry_fix=sg.shape_bdry_fix)
        mesh, y, history = shapeopt.optimize_shape(problem, opt)
        fields = [("state", y),
                  ("displacement", mesh.vertices - problem.initial_mesh.vertices)]
    print(f"{config.problem} n={config.mesh_n} {opt.algorithm}: {history.termination} after "
          f"{history.iterations} iterations, cost {history.costs[-1]:.10e}")
    if export_vtk_flag or export_history_flag:
        out.mkdir(parents=True, exist_ok=True)
    if export_history_flag:
        export_history(history, out / "history.csv")
    if export_vtk_flag:
        export_vtk(mesh, out / "solution.vtk", fields)
    return 0


def _print_cell(cell):
    its = "-" if cell.iterations is None else cell.iterations
    lo, hi = cell.band
    status = "PASS" if cell.passed else "FAIL"
    extra = f"  ({cell.error})" if cell.error else ""
    print(f"{status}  {cell.table} n={cell.n:<4d} {cell.algorithm:<7s} iterations={its} "
          f"band=[{lo}, {hi}] {cell.seconds:.1f}s{extra}", flush=True)


def benchmark(table: str, sizes, out: Path | None, solver: str | None = None) -> int:
    cells = run_benchmark(table, sizes, progress=_print_cell, solver=solver)
    ok = all(c.passed for c in cells)
    for alg in sorted({c.algorithm for c in cells}):
        s = spread(cells, alg)
        if s is not None and len(sizes) > 1:
            print(f"{'PASS' if s <= 2 else 'FAIL'}  mesh independence {alg}: spread {s}")
            ok &= s <= 2
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report_csv(cells), encoding="ascii")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        if args.command == "solve":
            config = load_config(args.config)
            out = args.out if args.out is not None else Path(config.output.directory)
            return solve(config, out, args.export_vtk or config.output.export_vtk,
                         args.export_history or config.output.export_history)
        return benchmark(args.table, args.sizes, args.out, args.solver)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
