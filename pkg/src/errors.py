"""Exception types shared across the control toolkit."""

from __future__ import annotations

from typing import Tuple


class DimensionError(ValueError):
    """Raised when array shapes do not match the system or policy dimensions."""


class UnstableSystemError(ValueError):
    """Raised when a matrix fails the strong-stability certification."""

    def __init__(self, message: str, spectral_radius: float) -> None:
        super().__init__(message)
        self.spectral_radius = spectral_radius


class NotStabilizableError(RuntimeError):
    """Raised when a Riccati iteration diverges or returns a non-stabilizing gain."""


class InfeasibleError(RuntimeError):
    """Raised when no attenuation level in the searched range is feasible."""

    def __init__(self, message: str, gamma_range: Tuple[float, float]) -> None:
        super().__init__(message)
        self.gamma_range = gamma_range


class InsufficientHistoryError(ValueError):
    """Raised when an oracle is queried before enough history is recorded."""


class OracleConvergenceError(RuntimeError):
    """Raised when a best-in-hindsight minimisation fails to converge."""


class ConfigError(ValueError):
    """Raised for malformed or out-of-range experiment configuration."""
