"""Error types for lpmkit."""

from __future__ import annotations


class LpmkitError(Exception):
    """Base exception for all lpmkit errors."""


class DegenerateInputError(LpmkitError):
    """Raised when input geometry makes a fit impossible.

    Examples: a zero-variance cloud, duplicate time stamps, a point at the
    angular origin of a lift, or knots that leave the spline system singular.
    """


class SolverError(LpmkitError):
    """Raised when a linear or spectral solve fails numerically."""


class WatertightError(LpmkitError):
    """Raised when a surface has no consistent interior for voxel counting."""

    def __init__(self, message: str = "surface not watertight") -> None:
        super().__init__(message)


class ConfigError(LpmkitError):
    """Raised for invalid or unknown configuration keys."""


class FormatError(LpmkitError):
    """Raised when a cloud or model file cannot be parsed.

    Attributes:
        line: 1-based line number of the offending row (if available).
    """

    def __init__(self, message: str, *, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StageError(LpmkitError):
    """Wraps a failure raised inside one stage of the longitudinal pipeline.

    Attributes:
        original: The exception raised by the stage.
        stage: Pipeline stage label ("reduce", "init", "pme", ...).
        index: Time index being processed when the failure happened.
    """

    def __init__(
        self,
        message: str,
        original: BaseException,
        *,
        stage: str,
        index: int | None = None,
    ) -> None:
        super().__init__(f"[{stage}] {message}")
        self.original = original
        self.stage = stage
        self.index = index

    def __repr__(self) -> str:
        idx = f", index={self.index}" if self.index is not None else ""
        return f"StageError({self.stage!r}, {self.original!r}{idx})"


class LpmkitWarning(UserWarning):
    """Warning category for recoverable numerical conditions."""
