"""Command line entry point.

    qlsched run --config configs/scenario1.yaml --out results/

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import ConfigError
from .runner import parse_config, run_plan


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlsched",
                                     description="Task scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment plan")
    run.add_argument("--config", required=True, help="YAML plan file")
    run.add_argument("--policy", action="append", default=None,
                     help="restrict to a policy (repeatable)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--replications", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--failure-ratio", type=float, default=None,
                     help="override failure ratios with a single value")
    run.add_argument("--range", type=int, default=None, dest="range_mi",
                     help="task length class width in MI")
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--epsilon0", type=float, default=None)
    run.add_argument("--repeater-max", type=int, default=None,
                     help="stable-cycle threshold for stopping training")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def plan_from_args(args) -> "ExperimentPlan":
    plan = parse_config(args.config)
    learner = plan.learner
    if args.gamma is not None:
        learner = replace(learner, gamma=args.gamma)
    if args.epsilon0 is not None:
        learner = replace(learner, epsilon0=args.epsilon0)
    if args.repeater_max is not None:
        learner = replace(learner, repeater_threshold=args.repeater_max)
    updates = {"learner": learner}
    if args.policy:
        updates["policies"] = args.policy
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.replications is not None:
        updates["replications"] = args.replications
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.failure_ratio is not None:
        updates["failure_ratios"] = [args.failure_ratio]
    if args.range_mi is not None:
        updates["range_mi"] = args.range_mi
    return replace(plan, **updates)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        plan = plan_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        outputs = run_plan(plan)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    dest = plan.out_dir or "(not written, no --out)"
    print(f"completed {len(outputs.runs)} runs over "
          f"{len(outputs.summary)} policy/point combinations; results: {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
