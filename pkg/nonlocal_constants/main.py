"""
CLI entry point for the nonlocal-constants tool.

    nonlocal-constants run --config exp.yaml [--tf X] [--tol X] [--out DIR] [--workers K]
    nonlocal-constants list
    nonlocal-constants check --config exp.yaml

The process exits with 0 (all budgets met), 1 (drift or hypothesis failure),
2 (configuration error) or 3 (integration stopped early). A batch exits with
the largest code of its experiments.
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import ConfigError, apply_overrides, load_config
from .experiment import EXIT_CONFIG, batch_exit_code, check_experiment, list_catalog, run_batch

# Get a logger for this module
logger = logging.getLogger(__name__)


def _add_log_level(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Set the logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonlocal-constants",
        description="Compute and verify nonlocal constants of motion along integrated Lagrangian trajectories.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="Integrate and evaluate the configured constants.")
    run.add_argument("--config", required=True, help="YAML experiment (or batch) file.")
    run.add_argument("--tf", type=float, default=None, help="Override the final time t_end.")
    run.add_argument("--tol", type=float, default=None, help="Override rel_tol and abs_tol.")
    run.add_argument(
        "--out",
        type=str,
        default=None,
        help="Output directory. Default: config value, then $NONLOCAL_CONSTANTS_OUTPUT, then ./results.",
    )
    run.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Number of worker processes for batch configs. Default: 1 (sequential).",
    )
    _add_log_level(run)

    listing = sub.add_parser("list", help="List catalog systems, families, potentials and constants.")
    _add_log_level(listing)

    check = sub.add_parser("check", help="Validate a config and the hypotheses at t0 (no integration).")
    check.add_argument("--config", required=True, help="YAML experiment (or batch) file.")
    _add_log_level(check)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """
    Main function to parse arguments and dispatch the subcommand.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        sys.exit(EXIT_CONFIG)

    logging.basicConfig(format="%(asctime)s - %(levelname)s - %(name)s - %(message)s")
    # Set the logging level based on user input
    log_level = getattr(logging, args.log_level.upper(), None)
    if not isinstance(log_level, int):
        raise ValueError(f"Invalid log level: {args.log_level}")
    logging.getLogger().setLevel(log_level)
    logger.debug("Logging level set to %s.", args.log_level.upper())

    if args.command == "list":
        print(list_catalog())
        sys.exit(0)

    try:
        configs = load_config(args.config)
        if args.command == "run":
            configs = [apply_overrides(c, tf=args.tf, tol=args.tol, out=args.out) for c in configs]
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        sys.exit(EXIT_CONFIG)

    if args.command == "check":
        codes = [check_experiment(cfg) for cfg in configs]
        sys.exit(max(codes))

    if args.workers < 1:
        logger.error("--workers must be >= 1")
        sys.exit(EXIT_CONFIG)

    results = run_batch(configs, workers=args.workers)
    for result in results:
        logger.info("%-24s exit=%d status=%s", result.name, result.exit_code, result.summary.get("status"))
    sys.exit(batch_exit_code(results))


if __name__ == "__main__":
    main()
