"""Exception hierarchy shared by services and the CLI."""

from __future__ import annotations


class HandDigitError(Exception):
    """Base class for every failure raised by the package."""


class DecodeError(HandDigitError, ValueError):
    """Raised when an image payload cannot be decoded."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ParameterError(HandDigitError, ValueError):
    """Raised when an operation receives an out-of-range parameter."""


class FitError(HandDigitError, ValueError):
    """Raised when a least-squares fit has no admissible solution."""


class DegenerateGeometryError(HandDigitError, ValueError):
    """Raised for point sets that do not span a two-dimensional shape."""


class StratificationError(HandDigitError, ValueError):
    """Raised when a class cannot be split into train and test parts."""


class StageError(HandDigitError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class UsageError(HandDigitError):
    """Raised by the command-line parser for invalid invocations."""

    def __init__(self, message: str, usage: str = "") -> None:
        super().__init__(message)
        self.usage = usage
