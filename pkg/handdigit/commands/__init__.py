"""Command-line parser assembly."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any, Callable, NoReturn

from handdigit.errors import UsageError
from handdigit.schemas import PipelineConfig

Handler = Callable[[argparse.Namespace, PipelineConfig], int]


class HandDigitParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on invalid input."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message, self.format_usage())


def override(config: PipelineConfig, section: str, **values: Any) -> PipelineConfig:
    """Replace fields of one config section, ignoring flags that were not given."""

    given = {key: value for key, value in values.items() if value is not None}
    if not given:
        return config
    current = getattr(config, section)
    updated = type(current).model_validate({**current.model_dump(), **given})
    return config.model_copy(update={section: updated})


def build_parser() -> HandDigitParser:
    from handdigit.commands import learning, stages

    parser = HandDigitParser(
        prog="handdigit",
        description="Recognize digits 1-9 signed with one hand.",
    )
    parser.add_argument("--config", type=Path, default=None, help="pipeline config JSON")
    parser.add_argument("--log-level", default=None, help="logging level (default: WARNING)")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    stages.register(subparsers)
    learning.register(subparsers)
    return parser
