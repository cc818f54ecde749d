"""Command-line interface: simulate, highdim-simulate, report, schedule-dump."""

from __future__ import annotations

import argparse
import sys

from .batchmeans import ScheduleError, make_schedule
from .harness import ConfigError, simulate, simulate_highdim


def _add_common(sub):
    sub.add_argument("--config", required=True, help="YAML scenario file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--workers", type=int, default=None,
                     help="parallel replication workers (default: from config)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override every scenario's base seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdinf",
        description="Confidence intervals from averaged SGD: coverage "
                    "simulations and batch-schedule tools.")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run low-dimensional coverage scenarios")
    _add_common(sim)
    sim.add_argument("--fixed-design", action="store_true", default=None,
                     help="draw one covariate stream per scenario and reuse it "
                          "across replications")

    hd = subs.add_parser("highdim-simulate",
                         help="run sparse-regression debiasing scenarios")
    _add_common(hd)

    rep = subs.add_parser("report", help="pretty-print a results.csv")
    rep.add_argument("--results", required=True, help="results.csv path")

    dump = subs.add_parser("schedule-dump", help="print batch-means boundaries")
    dump.add_argument("--n", type=int, required=True)
    dump.add_argument("--M", type=int, required=True)
    dump.add_argument("--alpha", type=float, required=True)
    return parser


def _cmd_report(path: str) -> int:
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n").split(",") for ln in fh if ln.strip()]
    except FileNotFoundError:
        print(f"error: results file not found: {path}", file=sys.stderr)
        return 2
    widths = [max(len(row[i]) for row in lines) for i in range(len(lines[0]))]
    for row in lines:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            rows = simulate(args.config, args.out, workers=args.workers,
                            seed=args.seed, fixed_design=args.fixed_design)
            print(f"wrote {len(rows)} rows to {args.out}/results.csv")
            return 0
        if args.command == "highdim-simulate":
            rows = simulate_highdim(args.config, args.out, workers=args.workers,
                                    seed=args.seed)
            print(f"wrote {len(rows)} rows to {args.out}/results.csv")
            return 0
        if args.command == "report":
            return _cmd_report(args.results)
        if args.command == "schedule-dump":
            schedule = make_schedule(args.n, args.M, args.alpha)
            print(schedule.to_json())
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
