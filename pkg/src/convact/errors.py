"""Exception types raised by :mod:`convact`."""

from __future__ import annotations


class GridMismatchError(ValueError):
    """Two sampled functions live on different grids."""


class AdmissibilityError(ValueError):
    """A trajectory or variation violates the essential (pinned) data."""


class SystemTooLargeError(ValueError):
    """The dense stationarity system would exceed the free-node cap."""


class SingularSystemError(RuntimeError):
    """The stationarity system is singular or numerically rank deficient."""

    def __init__(self, message: str, condition_estimate: float) -> None:
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


class ConfigError(ValueError):
    """An experiment configuration failed to parse or validate."""
