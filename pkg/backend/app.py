"""
PM-Lab - Command Line Entry Point
Runs one experiment (statics, gamma-probe, gamma-equiv, quasistatic, dynamics,
longtime) or a parameter sweep from a KEY=VALUE config file.

Exit status: 0 ok, 1 config error, 2 invariant violation, 3 solver/runtime error.
"""

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from config import ExperimentConfig, load_config
from errors import ConfigError, InvariantViolation, PMLabError
from experiments import get_experiment_manager
from settings import get_settings
from sweep import run_sweep

logger = logging.getLogger(__name__)

EXPERIMENTS = ("statics", "gamma-probe", "gamma-equiv", "quasistatic", "dynamics", "longtime")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_RUNTIME = 3


class CLIParser(argparse.ArgumentParser):
    """Usage errors exit with status 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = CLIParser(add_help=False)
    common.add_argument("--config", required=True, help="KEY=VALUE experiment config")
    common.add_argument("--out", help="output directory (overrides the config's output key)")
    common.add_argument("--seed", type=int, help="seed for randomized checks (overrides the config)")
    common.add_argument("--allow-unstable", action="store_true",
                        help="dynamics only: run with 4 tau/eps^2 >= 1 and mark the trace tainted")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default from PMLAB_LOG_LEVEL)")
    common.add_argument("--dry-run", action="store_true", help="validate and print the materialized config")

    parser = CLIParser(prog="pmlab", description="Scaled Perona-Malik lattice experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=get_experiment_manager().get(name).description)
    sweep = sub.add_parser("sweep", parents=[common], help="run the config's sweep.axis over sweep.values")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel sweep points (default 1)")
    sub.add_parser("list", help="list registered experiments")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out:
        overrides["output"] = args.out
    if args.allow_unstable:
        overrides["allow_unstable"] = "true"
    return overrides


def _execute(config: ExperimentConfig, jobs: int) -> int:
    if config.is_sweep:
        return run_sweep(config, jobs).exit_code
    get_experiment_manager().execute(config.experiment, config.params, config.output, config.seed,
                                     extra={"config": str(config.source) if config.source else None})
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (getattr(args, "log_level", None) or get_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "list":
        for meta in get_experiment_manager().list_experiments():
            print(f"{meta['name']:<12} {meta['description']}")
        return EXIT_OK

    experiment = None if args.command == "sweep" else args.command
    try:
        config = load_config(args.config, experiment, _overrides(args))
        if args.command == "sweep" and not config.is_sweep:
            raise ConfigError("the sweep command needs sweep.axis and sweep.values", key="sweep.axis")
        if args.command != "sweep" and config.is_sweep:
            raise ConfigError("config declares a sweep; run it with 'sweep'", key="sweep.axis")
    except (ConfigError, ValidationError) as e:
        logger.error(f"❌ Config error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        print(json.dumps(config.materialized(), indent=2, sort_keys=True, default=str))
        return EXIT_OK

    try:
        return _execute(config, getattr(args, "jobs", 1))
    except InvariantViolation as e:
        print(f"invariant violated: {e.invariant}", file=sys.stderr)
        return EXIT_INVARIANT
    except ConfigError as e:
        logger.error(f"❌ Config error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PMLabError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
