"""Exceptions for hazardkit."""

from typing import Any, Optional, Sequence


class HazardKitError(Exception):
    """Base exception for all hazardkit errors."""

    pass


class ValidationError(HazardKitError):
    """Raised when input data or arguments violate an invariant."""

    pass


class ConfigError(HazardKitError):
    """Raised when an analysis configuration document is invalid."""

    pass


class NumericalError(HazardKitError):
    """Raised when a model fit fails numerically."""

    pass


class ConvergenceError(NumericalError):
    """Raised when an iterative fit does not converge."""

    pass


class MonotoneLikelihoodError(NumericalError):
    """
    Raised when the likelihood keeps increasing as a coefficient runs off to infinity.

    This happens when one covariate pattern has no events (or only events)
    within every risk set. The coefficient and its direction are attached.
    """

    def __init__(self, coefficient: str, direction: str, message: Optional[str] = None):
        self.coefficient = coefficient
        self.direction = direction
        super().__init__(
            message
            or f"monotone likelihood: coefficient '{coefficient}' diverges to {direction} infinity"
        )


class RankDeficiencyError(NumericalError):
    """Raised when the design matrix is rank deficient."""

    def __init__(self, columns: Sequence[str], message: Optional[str] = None):
        self.columns = tuple(columns)
        super().__init__(
            message or f"design matrix is rank deficient (columns: {', '.join(self.columns)})"
        )


class LintFailure(HazardKitError):
    """Raised when a lint report contains errors and the caller asked to fail on them."""

    def __init__(self, report: Any, message: Optional[str] = None):
        self.report = report
        super().__init__(message or "lint found errors in the cohort")


class DownloadError(HazardKitError):
    """Raised when a public dataset cannot be retrieved."""

    pass


class DatasetNotFoundError(DownloadError):
    """Raised when the dataset mirror has no file under the requested name."""

    pass


class BlockError(HazardKitError):
    """Raised when an analysis block fails; wraps the underlying error."""

    def __init__(self, block: str, cause: Exception):
        self.block = block
        self.cause = cause
        super().__init__(f"block '{block}' failed: {cause}")
