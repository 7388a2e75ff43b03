"""Command-line entry point."""

from __future__ import annotations

import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from handdigit.commands import build_parser
from handdigit.config import get_settings
from handdigit.errors import HandDigitError, UsageError
from handdigit.services import storage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROCESSING = 2


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the chosen command and map failures to exit codes."""

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage or parser.format_usage())
        sys.stderr.write(f"handdigit: error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version exit through argparse
        return int(exc.code or 0)

    settings = get_settings()
    configure_logging(args.log_level or settings.log_level)
    try:
        config = storage.load_config(args.config or settings.config_path)
        return args.handler(args, config)
    except UsageError as exc:
        sys.stderr.write(f"handdigit: error: {exc}\n")
        return EXIT_USAGE
    except (HandDigitError, ValidationError, OSError) as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        sys.stderr.write(f"handdigit: error: {exc}\n")
        return EXIT_PROCESSING


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
