"""Exception taxonomy shared across the package."""

from __future__ import annotations


class BifinfError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(BifinfError, ValueError):
    """A precondition on an argument was violated."""


class AssumptionViolationError(BifinfError):
    """Input data violates one of the standing model assumptions.

    Carries ``node`` (grid index) and ``value`` when the violation is
    attributable to a single grid node.
    """

    def __init__(self, message: str, node: int | None = None, value: float | None = None):
        super().__init__(message)
        self.node = node
        self.value = value


class NotAnEigenvalueError(BifinfError, ValueError):
    """The requested splitting point is not in the discrete spectrum."""


class NumericFailureError(BifinfError):
    """A numerical kernel failed (non-convergence, non-finite values)."""

    def __init__(self, message: str, residual: float | None = None, node: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.node = node


class InvalidShiftError(BifinfError, ValueError):
    """Fractional-power shift does not make the operator positive."""


class GateRefusedError(BifinfError):
    """The smallness gate F_mu * L_f < 1 failed; solver refuses to run."""

    def __init__(self, message: str, product: float):
        super().__init__(message)
        self.product = product


class HorizonTooShortError(BifinfError):
    """Truncation tail bound exceeds tolerance; carries a suggested horizon."""

    def __init__(self, message: str, suggested_horizon: float):
        super().__init__(message)
        self.suggested_horizon = suggested_horizon


class NonConvergenceError(BifinfError):
    """Iteration budget exhausted; carries the last residual."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceDetectedError(BifinfError):
    """State norm crossed the overflow guard during time integration."""


class InsufficientDataError(BifinfError, ValueError):
    """Not enough data points for the requested fit or label mismatch."""


class EmptyBranchError(BifinfError):
    """Continuation seed failed at the very first parameter value."""


class SideMissingError(BifinfError):
    """No bounded equilibrium found on one side of the critical value."""

    def __init__(self, message: str, side: str):
        super().__init__(message)
        self.side = side


class ConfigError(BifinfError, ValueError):
    """Scenario configuration failed schema validation.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field
