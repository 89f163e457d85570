"""Exception types shared across the package."""

from __future__ import annotations


class AdbidError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AdbidError, ValueError):
    """A configuration value is inconsistent or out of range."""


class InputError(AdbidError, ValueError):
    """Input data violates a documented precondition."""


class ParseError(AdbidError, ValueError):
    """A campaign file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EpisodeFinishedError(AdbidError, RuntimeError):
    """step() was called on an episode that already played all steps."""


class InstanceTooLargeError(AdbidError, ValueError):
    """The exact solver was asked to enumerate more assignments than allowed."""


class DegenerateRankingError(AdbidError, ValueError):
    """A constant bid coefficient cannot separate accepted from rejected items."""


class CheckpointError(AdbidError, ValueError):
    """A policy checkpoint is malformed or incompatible."""


class TrainingDivergedError(AdbidError, RuntimeError):
    """Training hit a non-finite loss; a diagnostic checkpoint was written."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        self.checkpoint_path = checkpoint_path
        super().__init__(message)
