"""Command-line entry point.

    recoverysim run scenario.yaml --seeds 10 --out results/
    recoverysim run scenario.yaml --experiment residual_sweep --override tcp.variant=reno
    recoverysim run --dump-config

Exit codes: 0 success, 2 configuration error, 3 runtime assertion failure.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .scenario import EXPERIMENTS, ConfigError, apply_override, load_scenario, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recoverysim",
        description="Simulate stacked HARQ/RLC/TCP data-recovery loops",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario", nargs="?", default=None, help="scenario YAML file")
    run.add_argument("--seeds", type=int, default=None, help="number of seeds")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument(
        "--experiment",
        default=None,
        choices=EXPERIMENTS,
        help="override the experiment named in the scenario file",
    )
    run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a configuration key (dotted path), repeatable",
    )
    run.add_argument(
        "--workers", type=int, default=None, help="worker processes (default: CPUs)"
    )
    run.add_argument(
        "--dump-config",
        action="store_true",
        help="print the fully-resolved configuration and exit",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        resolved = load_scenario(args.scenario)
        if args.seeds is not None:
            resolved["seeds"] = args.seeds
        if args.experiment is not None:
            resolved["experiment"] = args.experiment
        for assignment in args.override:
            apply_override(resolved, assignment)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dump_config:
        print(yaml.safe_dump(resolved, sort_keys=True, default_flow_style=False), end="")
        return EXIT_OK

    try:
        outputs = run_scenario(resolved, args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for target in outputs.get("skipped_targets", []):
        print(f"skipped unreachable residual-error target {target}", file=sys.stderr)
    for key in ("raw_csv", "agg_csv", "matrix_csv"):
        if key in outputs:
            print(outputs[key])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
