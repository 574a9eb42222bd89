"""Command-line front end: ``netsym <subcommand> --config run.json``."""

import argparse
import logging
import sys
from typing import List, Optional

from netsym.core.config import SUBCOMMANDS, ConfigError, load_config
from netsym.core.experiment_core import ExperimentCore
from netsym.core.training import TrainingDivergedError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netsym",
        description="Monte Carlo symmetry checks of neural-network ensembles.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--workers", type=int, help="worker threads for the estimators")
    parser.add_argument("--out", help="output directory for result and manifest files")
    parser.add_argument("--samples", type=int, help="sample count for every order")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    return parser


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    overrides = {
        "subcommand": args.subcommand,
        "seed": args.seed,
        "workers": args.workers,
        "output": args.out,
        "samples": args.samples,
    }
    try:
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        for error in exc.errors:
            print(f"config error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = ExperimentCore(config).run()
    except (ValueError, FileNotFoundError, TrainingDivergedError) as exc:
        logger.error("%s failed: %s", config.subcommand, exc)
        return EXIT_FAILURE
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
