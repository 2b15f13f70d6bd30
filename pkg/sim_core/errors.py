"""Exception hierarchy for the simulator.

The CLI maps these to exit codes: ConfigError -> 2, NumericalError -> 3, anything else -> 1.
"""

from __future__ import annotations

from typing import List, Sequence


class BurstSimError(Exception):
    """Base class for all simulator errors."""

    exit_code = 1


class ConfigError(BurstSimError):
    """Invalid configuration; carries one message per offending field path."""

    exit_code = 2

    def __init__(self, problems: Sequence[str]):
        self.problems: List[str] = list(problems)
        super().__init__("; ".join(self.problems) or "invalid configuration")


class GeometryError(BurstSimError, ValueError):
    """Layout or grid geometry violates an invariant."""


class OutOfBoundsError(BurstSimError, ValueError):
    """A position lies outside (or too close to the edge of) a solved grid or table."""


class NumericalError(BurstSimError):
    exit_code = 3


class ConvergenceError(NumericalError):
    """Iterative solve did not reach tolerance."""

    def __init__(self, message: str, last_residual: float, residual_trace: Sequence[float] = ()):
        self.last_residual = float(last_residual)
        self.residual_trace = list(residual_trace)
        super().__init__(f"{message} (last residual {self.last_residual:.3e})")


class FitError(NumericalError):
    """Least-squares fit failed or the data carry no transient."""

    def __init__(self, message: str, residual_trace: Sequence[float] = ()):
        self.residual_trace = list(residual_trace)
        super().__init__(message)


class StatisticsError(BurstSimError, ValueError):
    """Estimator input is pathological (zero denominators, empty samples)."""


class ManifestMismatchError(BurstSimError):
    """Inputs handed to `plot` were produced by a different run."""
