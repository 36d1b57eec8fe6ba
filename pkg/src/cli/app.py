import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from src.core.errors import FigClipError
from .commands import COMMAND_GROUPS

logger = logging.getLogger(__name__)

USAGE_EXIT_CODE = 1
IO_EXIT_CODE = 2


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1 instead of argparse's 2"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT_CODE, f"{self.prog}: error: {message}\n")


def create_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="figclip",
        description="Adapt a frozen dual encoder to fine-grained event prompts and evaluate it.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for group in COMMAND_GROUPS:
        group.register(subparsers)
    return parser


def configure_logging() -> None:
    level = logging.getLevelName(os.getenv("FIGCLIP_LOG_LEVEL", "INFO").upper())
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the chosen command and return its exit code"""
    load_dotenv()
    configure_logging()
    args = create_parser().parse_args(argv)
    try:
        return args.handler(args) or 0
    except FigClipError as e:
        logger.error(f"{args.command}: {e}")
        return e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"{args.command}: {e}")
        return IO_EXIT_CODE
