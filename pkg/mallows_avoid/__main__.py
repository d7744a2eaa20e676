"""
Command-line entry point for mallows-avoid
"""

import argparse
import os
import sys
from typing import Callable, Dict, List, Optional, Tuple, Type

from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, ValidationError

from mallows_avoid.cli.commands import (
    EXIT_IO,
    EXIT_USAGE,
    cmd_compare,
    cmd_limit,
    cmd_partition,
    cmd_sample,
    cmd_validate,
    load_overlay,
    resolve_input,
)
from mallows_avoid.cli.models import (
    CompareInput,
    LimitInput,
    PartitionInput,
    SampleInput,
    ValidateInput,
)
from mallows_avoid.utils.config import load_config

CONFIG_ENV = "MALLOWS_AVOID_CONFIG"
PATTERN_CHOICES = ["321", "231", "123", "132", "213", "312"]

COMMANDS: Dict[str, Tuple[Type[BaseModel], Callable]] = {
    "sample": (SampleInput, cmd_sample),
    "limit": (LimitInput, cmd_limit),
    "partition": (PartitionInput, cmd_partition),
    "compare": (CompareInput, cmd_compare),
    "validate": (ValidateInput, cmd_validate),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mallows-avoid",
        description="Mallows permutations avoiding a pattern of length 3",
    )
    parser.add_argument("--config", type=str, help="JSON overlay of flags and settings")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sample = sub.add_parser("sample", help="Run the tilted Markov chain")
    sample.add_argument("--pattern", choices=PATTERN_CHOICES)
    sample.add_argument("--n", type=int)
    sample.add_argument("--beta", type=float)
    sample.add_argument("--steps", type=int)
    sample.add_argument("--seed", type=int)
    sample.add_argument("--thin", type=int)
    sample.add_argument("--init", choices=["min", "max", "alt", "limit"])
    sample.add_argument("--coupling-check", action="store_true", default=None)
    sample.add_argument("--checkpoints", type=int)
    sample.add_argument("--out", type=str)

    limit = sub.add_parser("limit", help="Write the limit curves")
    limit.add_argument("--pattern", choices=PATTERN_CHOICES)
    limit.add_argument("--beta", type=float)
    limit.add_argument("--grid", type=int)
    limit.add_argument("--out", type=str)

    partition = sub.add_parser("partition", help="Tabulate (1/n) log Z_n against its limit")
    partition.add_argument("--pattern", choices=PATTERN_CHOICES)
    partition.add_argument("--beta", type=float)
    sizes = partition.add_mutually_exclusive_group()
    sizes.add_argument("--n-list", type=int, nargs="+")
    sizes.add_argument("--n-max", type=int)
    partition.add_argument("--exact", action="store_true", default=None)
    partition.add_argument("--out", type=str)

    compare = sub.add_parser("compare", help="Distances from a sample to the limit")
    compare.add_argument("--input", type=str)
    compare.add_argument("--pattern", choices=PATTERN_CHOICES)
    compare.add_argument("--beta", type=float)
    compare.add_argument("--grid", type=int)
    compare.add_argument("--out", type=str)

    validate = sub.add_parser("validate", help="Run the exhaustive validation suites")
    validate.add_argument("--n-max", type=int)
    validate.add_argument("--ball-n", type=int)
    validate.add_argument("--out", type=str)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for mallows-avoid."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    # Configure logging
    log_level = "DEBUG" if args.debug else "INFO"
    logger.remove()
    logger.add(
        sys.stderr,
        level=log_level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
    )

    config_path = args.config or os.environ.get(CONFIG_ENV)
    model, handler = COMMANDS[args.command]
    flags = {
        key: value
        for key, value in vars(args).items()
        if key not in ("config", "debug", "command")
    }

    try:
        settings = load_config(config_path)
        inputs = resolve_input(model, flags, load_overlay(config_path))
        logger.info(f"Running {args.command}")
        return handler(inputs, settings)
    except (ValidationError, ValueError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"{args.command}: I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
