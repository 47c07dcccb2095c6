"""Command-line front end.

    gridopt list
    gridopt run --problem 6 --repeat 11
    gridopt run --model my.model --format json --out design.json
    gridopt verify design.csv --problem 3 --probes 500

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dsl
from .design import SingularMatrixError, d_criterion, efficiency_lower_bound, information_matrix
from .designio import format_design, read_design, write_design
from .gex import GexConfig, probe_variance, run_gex
from .models import all_benchmarks, benchmark
from .solver import DegenerateSetError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

DISCLAIMER = (
    "note: the bound is relative to the probed points only "
    "(hill climbs and star sets); it is not a certified global bound."
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_source(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", type=int, metavar="N", help="built-in benchmark problem (1..10)")
    src.add_argument("--model", type=Path, metavar="PATH", help="model file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridopt", description="D-optimal designs on large factor grids.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress of each round")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="list the built-in benchmark problems")

    run = sub.add_parser("run", help="compute a design")
    _add_source(run)
    run.add_argument("--eff-opt", type=float, default=1 - 1e-6)
    run.add_argument("--eff-grp", type=float, default=1 - 1e-6)
    run.add_argument("--eff-stop", type=float, default=1 - 1e-6)
    run.add_argument("--n-loc", type=int, default=50)
    run.add_argument("--n-rnd", type=int, default=1000)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--repeat", type=int, default=1)
    run.add_argument("--format", choices=("csv", "json", "table"), default="table")
    run.add_argument("--out", type=Path, help="design output file; a run report is written next to it")
    run.add_argument("--reparametrize", action="store_true", help="work with M^(-1/2) f for ill-conditioned models")

    ver = sub.add_parser("verify", help="bound the efficiency of a design by probing its variance function")
    ver.add_argument("design", type=Path, help="design file (CSV or JSON)")
    _add_source(ver)
    ver.add_argument("--probes", type=int, default=500, help="number of random-start hill climbs")
    ver.add_argument("--seed", type=int, default=0)
    return parser


def load_problem(args):
    """Return ``(label, grid, model)`` for ``--problem`` or ``--model``."""
    if args.problem is not None:
        try:
            p = benchmark(args.problem)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return f"problem {p.id}", p.grid, p.model
    try:
        mf = dsl.load(args.model)
    except OSError as exc:
        raise UsageError(f"cannot read {args.model}: {exc}") from None
    except dsl.ParseError as exc:
        raise UsageError(f"{args.model}: {exc}") from None
    return str(args.model), mf.grid(), mf.model(str(args.model))


def _run_paths(out: Path, i: int, repeat: int) -> tuple[Path, Path]:
    stem = out.stem if repeat == 1 else f"{out.stem}.run{i + 1}"
    design_path = out.with_name(stem + out.suffix)
    return design_path, out.with_name(stem + ".report.json")


def cmd_list(args) -> int:
    print(f"{'#':>2} {'k':>3} {'m':>3}  {'grid size':>10}  levels per factor / model")
    for p in all_benchmarks():
        counts = [int(c) for c in p.grid.counts]
        dims = " x ".join(str(c) for c in counts)
        print(f"{p.id:>2} {p.k:>3} {p.m:>3}  {p.grid.size:>10.3g}  {dims}")
        print(f"{'':>23}{p.description}")
    return EXIT_OK


def cmd_run(args) -> int:
    label, grid, model = load_problem(args)
    if args.repeat < 1:
        raise UsageError("--repeat must be at least 1")
    try:
        configs = [
            GexConfig(
                eff_opt=args.eff_opt,
                eff_grp=args.eff_grp,
                eff_stop=args.eff_stop,
                n_loc=args.n_loc,
                n_rnd=args.n_rnd,
                seed=args.seed + i,
                reparametrize=args.reparametrize,
            )
            for i in range(args.repeat)
        ]
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    threads = max(1, int(os.environ.get("GRIDOPT_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=min(threads, args.repeat)) as pool:
        results = list(pool.map(lambda cfg: run_gex(grid, model, cfg), configs))

    for i, (design, report) in enumerate(results):
        if args.out is not None:
            design_path, report_path = _run_paths(args.out, i, args.repeat)
            write_design(design, design_path, args.format, report.phi, model.m)
            report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if args.out is None:
        design, report = results[0]
        sys.stdout.write(format_design(design, args.format, report.phi, model.m))

    phis = [r.phi for _, r in results]
    times = [r.elapsed_s for _, r in results]
    printed = {f"{phi:.6g}" for phi in phis}
    print(
        f"{label}: phi = {phis[0]:.6g}  support = {results[0][0].size}  "
        f"runs = {len(phis)}  t = {min(times):.2f} - {max(times):.2f} s"
    )
    if len(printed) > 1:
        print(f"warning: criterion values differ across runs: {sorted(printed)}", file=sys.stderr)
    if not all(r.converged for _, r in results):
        print("warning: a run hit the round cap before the stopping rule", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    label, grid, model = load_problem(args)
    try:
        design = read_design(args.design)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read design {args.design}: {exc}") from None
    if design.k != grid.k:
        raise UsageError(f"design has {design.k} factors, {label} has {grid.k}")
    try:
        grid.indices(design.points)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    max_d, at = probe_variance(grid, model, design, args.probes, args.seed)
    bound = efficiency_lower_bound(design, model, max_d)
    phi = d_criterion(information_matrix(design, model))
    print(f"{label}: phi = {phi:.6g}  support = {design.size}")
    print(f"max d found = {max_d:.9g} at {np.array2string(at, separator=', ')}  (m = {model.m})")
    print(f"efficiency bound = {bound:.9f}")
    print(DISCLAIMER)
    return EXIT_OK


COMMANDS = {"list": cmd_list, "run": cmd_run, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gridopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, DegenerateSetError, np.linalg.LinAlgError, FloatingPointError, dsl.DomainError) as exc:
        print(f"gridopt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
