"""Command line entry point: one subcommand per run mode."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (EXIT_CONFIG_ERROR, ConfigError, RunConfig, replay, run)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--world", help="built-in world name or world file path")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, dest="step_budget")
    p.add_argument("--spawn")
    p.add_argument("--output", dest="output_dir")
    p.add_argument("--resume", dest="resume_from",
                   help="checkpoint file to resume from")
    p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aifnav",
        description="Active-inference mapping, localisation and planning "
                    "experiments in a 2D simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="explore a world until coverage or budget")
    _add_common(p)
    p.add_argument("--coverage-target", type=float)

    p = sub.add_parser("goal", help="navigate to a goal panorama")
    _add_common(p)
    p.add_argument("--goal-observation", help="goal panorama (.pgm)")
    p.add_argument("--pragmatic-weight", type=float)

    p = sub.add_parser("drift-demo", help="two-move drift scenario, four branches")
    _add_common(p)
    p.add_argument("--branch", type=int, choices=(1, 2, 3, 4), dest="drift_branch")

    p = sub.add_parser("obstacle-demo", help="box displacement adaptation demo")
    _add_common(p)

    p = sub.add_parser("replay", help="recompute metrics from a stored trace")
    p.add_argument("trace", help="trace.jsonl path")
    return parser


_MODE_BY_COMMAND = {
    "explore": "explore",
    "goal": "goal",
    "drift-demo": "drift_demo",
    "obstacle-demo": "obstacle_demo",
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        try:
            metrics = replay(args.trace)
        except (ValueError, OSError) as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        print(json.dumps(metrics, indent=2, sort_keys=True))
        return 0

    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "no_plots") and v is not None}
    overrides["mode"] = _MODE_BY_COMMAND[args.command]
    if args.no_plots:
        overrides["plots"] = False
    try:
        if args.config:
            config = RunConfig.from_file(args.config, overrides)
        else:
            config = RunConfig.from_dict(overrides)
        report = run(config)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(json.dumps(report.metrics, indent=2, sort_keys=True))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
