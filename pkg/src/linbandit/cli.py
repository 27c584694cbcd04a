"""Command line entry point: ``linbandit <subcommand> ...``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
numerical failures (singular designs, tied optima, solver breakdown).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import conc, design, harness
from .errors import ConfigError, NumericalError
from .instances import compute_gaps, load_instance, validate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(table: harness.Table, csv_path) -> None:
    print(table.to_text())
    if csv_path:
        harness.write_csv(table, csv_path)


def cmd_solve(args) -> None:
    inst = load_instance(args.instance)
    for w in validate(inst).warnings:
        print(f"warning: {w}", file=sys.stderr)
    gaps = compute_gaps(inst)
    alloc = design.solve_allocation(inst.actions, gaps, tol=args.tol)
    rows = []
    for x in range(inst.k):
        rows.append((x, float(gaps.gaps[x]), float(alloc.weights[x]), float(alloc.residuals[x])))
    table = harness.Table(("arm_index", "gap", "weight", "residual"), rows)
    print(f"c(A, theta) = {alloc.value:.10g}")
    print(f"optimal arm {alloc.optimal_index} carries the cap weight {alloc.cap:.6g}")
    _emit(table, args.csv)


def cmd_spanner(args) -> None:
    inst = load_instance(args.instance)
    sp = design.barycentric_spanner(inst.actions, args.c)
    coef = np.array([design.spanner_coefficients(x, sp, inst.actions) for x in inst.arms])
    print(f"spanner arms: {list(sp.indices)} (C = {sp.C:g})")
    rows = [(x, *map(float, coef[x])) for x in range(inst.k)]
    cols = ("arm_index",) + tuple(f"coef_{i}" for i in range(len(sp.indices)))
    table = harness.Table(cols, rows, [f"max |coefficient| = {np.abs(coef).max():.6g}"])
    _emit(table, args.csv)


def cmd_simulate(args) -> None:
    cfg = harness.load_experiment(args.experiment)
    result = harness.run_experiment(cfg, args.workers)
    summary = harness.summary_table(result)
    harness.write_outputs(result, summary)
    print(summary.to_text())


def cmd_counterexample(args) -> None:
    table = harness.counterexample_report(args.alpha, args.eps, args.n, args.reps, args.seed, args.workers)
    _emit(table, args.csv)


def cmd_verify_conc(args) -> None:
    inst = load_instance(args.instance)
    schedule = args.schedule
    if schedule not in ("spanner", "all"):
        try:
            schedule = [int(s) for s in schedule.split(",")]
        except ValueError:
            raise ConfigError(f"bad --schedule {args.schedule!r}") from None
    rows = []
    for delta in args.delta:
        rate = conc.empirical_violation_rate(
            inst, schedule, args.n, delta, args.reps, args.seed, c_univ=args.c_univ
        )
        rows.append((delta, rate, args.reps))
    table = harness.Table(("delta", "rate", "reps"), rows)
    harness.write_csv(table, args.csv or sys.stdout)


def cmd_diagnose_lb(args) -> None:
    cfg = harness.load_experiment(args.experiment)
    result = harness.run_experiment(cfg, args.workers)
    for p in cfg.policies:
        table = harness.lower_bound_diagnostic(result.grams[p.display], cfg.instance, cfg.horizon)
        print(f"[{p.display}] n={cfg.horizon} reps={cfg.reps}")
        print(table.to_text())
        print()


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="linbandit", description="Finite-armed linear bandit laboratory.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve the allocation problem and print c(A, theta)")
    p.add_argument("instance")
    p.add_argument("--csv", help="also write the weight table to this file")
    p.add_argument("--tol", type=float, default=design.FEAS_TOL, help="constraint residual tolerance")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("spanner", help="compute a C-approximate barycentric spanner")
    p.add_argument("instance")
    p.add_argument("--c", type=float, default=1.0, help="approximation factor C >= 1")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_spanner)

    p = sub.add_parser("simulate", help="run an experiment file and write its CSV outputs")
    p.add_argument("experiment")
    p.add_argument("--workers", type=int, help="worker processes (default: config value or all cores)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counterexample", help="optimism vs Thompson vs the optimal policy on the trap instance")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("verify-conc", help="Monte Carlo check of the confidence threshold")
    p.add_argument("instance")
    p.add_argument("--delta", type=float, nargs="+", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c-univ", type=float, default=conc.DEFAULT_C_UNIV)
    p.add_argument("--schedule", default="spanner", help="'spanner', 'all' or comma-separated arm indices")
    p.add_argument("--csv", help="write rows here instead of stdout")
    p.set_defaults(func=cmd_verify_conc)

    p = sub.add_parser("diagnose-lb", help="lower-bound diagnostic on the average Gram matrix")
    p.add_argument("experiment")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_diagnose_lb)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
