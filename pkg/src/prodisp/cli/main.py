"""Command-line entry point: ``prodisp <subcommand> --config scenario.toml``."""

from __future__ import annotations

import argparse
import json
import sys

from .pipeline import StageError, run_pipeline
from .scenario import PIPELINE_ORDER, Scenario, ScenarioError, apply_overrides, load_scenario

SUBCOMMANDS = (*PIPELINE_ORDER, "pipeline")

_HELP = {
    "equilibrium": "solve beta <-> demand and tabulate the worker distribution",
    "stationary": "exact stationary occupancy of the jump Markov process",
    "simulate": "event-driven simulation replicas of the jump Markov process",
    "superstat": "worker distribution under fluctuating demand",
    "fit": "Pareto and GB2 fits of a firm panel",
    "mcarlo": "marginal vs average productivity Monte Carlo",
    "gen": "generate a synthetic firm panel",
    "pipeline": "run the scenario's stage list",
}


def _global_flags(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="scenario TOML file")
    common.add_argument("--seed", type=int, default=default, help="override the scenario seed")
    common.add_argument("--out", default=default, help="output directory (replaced atomically)")
    common.add_argument("--trim-top", type=int, dest="trim_top", default=default,
                        help="firms removed per year from the top of productivity")
    return common


def build_parser() -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the subcommand copies
    # suppress their defaults so they do not clobber values given up front
    parser = argparse.ArgumentParser(
        prog="prodisp", description=__doc__, parents=[_global_flags(None)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    after = _global_flags(argparse.SUPPRESS)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[after], help=_HELP[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sc = load_scenario(args.config) if args.config else Scenario()
        sc = apply_overrides(sc, seed=args.seed, out=args.out, trim_top=args.trim_top)
        stages = None if args.command == "pipeline" else [args.command]
        bundle = run_pipeline(sc, stages)
    except ScenarioError as exc:
        print(f"prodisp: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"prodisp: {exc}", file=sys.stderr)
        if exc.preserved:
            print("preserved artifacts:", file=sys.stderr)
            for p in exc.preserved:
                print(f"  {p}", file=sys.stderr)
        return 1
    print(json.dumps({"out": str(bundle.out), "files": len(bundle.summary["manifest"])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
