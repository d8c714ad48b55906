"""Exception types raised by the evstereo services."""

from typing import Optional


class EvStereoError(Exception):
    """Base class for all evstereo errors."""


class ConfigError(EvStereoError, ValueError):
    """Invalid, unknown or uncoercible configuration values."""

    def __init__(self, message: str, details: Optional[list] = None) -> None:
        super().__init__(message)
        self.details = list(details or [])


class OutOfBoundsError(EvStereoError, ValueError):
    """An event lies outside the configured sensor geometry."""


class EventFormatError(EvStereoError, ValueError):
    """A line of an event file could not be accepted."""

    MALFORMED_LINE = "MALFORMED_LINE"
    NON_MONOTONIC_TIMESTAMP = "NON_MONOTONIC_TIMESTAMP"
    OUT_OF_BOUNDS = "OUT_OF_BOUNDS"

    def __init__(self, kind: str, path: str, line_number: int, detail: str = "") -> None:
        message = f"{path}:{line_number}: {kind}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.kind = kind
        self.path = path
        self.line_number = line_number


class DegeneratePlaneError(EvStereoError, ArithmeticError):
    """The least-squares plane system is singular or the normal has n3 ~ 0."""


class UndefinedVelocityError(EvStereoError, ArithmeticError):
    """Lifetime or timestamp prediction is undefined for the given plane/velocity."""


class EmptyWindowError(EvStereoError, LookupError):
    """No lifetimed events were found in the matched window."""


class PipelineIOError(EvStereoError, OSError):
    """Reading or writing a pipeline file failed."""

    def __init__(self, path: str, detail: str) -> None:
        super().__init__(f"{path}: {detail}")
        self.path = path


class NonMonotonicTimestampError(EvStereoError, ValueError):
    """An event is older than the one already stored at its pixel."""
