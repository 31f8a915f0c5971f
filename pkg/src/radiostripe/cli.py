"""Command-line entry point for Monte Carlo sweeps."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import AXES, build_plan, emit, format_aggregates, read_config, render, run_plan


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="radiostripe",
        description="Sweep a radio-stripe scenario and report per-trial sum-rates.",
    )
    p.add_argument("--config", metavar="PATH", help="INI file with [network], [optimizer], "
                   "[subproblem] and [harness] sections")
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", help="comma or space separated sweep values")
    p.add_argument("--schemes", help="subset of WZ,P2P")
    p.add_argument("--modes", help="robust, non_robust or both")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="PATH", help="output file; stdout when omitted")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int, help="size of the process pool (default 1)")
    p.add_argument("--no-timing", action="store_true",
                   help="write runtime_s as 0 so repeated runs give identical files")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    settings = read_config(args.config) if args.config else {}
    harness = dict(settings.get("harness", {}))
    overrides = {"axis": args.axis, "values": args.values, "schemes": args.schemes,
                 "modes": args.modes, "trials": args.trials, "seed": args.seed,
                 "out": args.out, "format": args.format, "workers": args.workers}
    harness.update({k: str(v) for k, v in overrides.items() if v is not None})
    if args.no_timing:
        harness["record_runtime"] = "false"
    settings["harness"] = harness
    try:
        plan = build_plan(settings)
    except (TypeError, ValueError) as exc:
        print(f"radiostripe: {exc}", file=sys.stderr)
        return 1

    rows, aggs = run_plan(plan, progress=args.verbose)
    if plan.output:
        emit(rows, plan.output_format, plan.output)
        print(format_aggregates(aggs))
    else:
        sys.stdout.write(render(rows, plan.output_format))
    return 0 if all(r.status == "converged" for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
