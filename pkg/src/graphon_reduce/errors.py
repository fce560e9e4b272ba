"""Exception types raised by the toolkit."""

from __future__ import annotations


class GraphonReduceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GraphonReduceError, ValueError):
    """A coordinate, parameter or array shape is outside the accepted domain."""


class DegenerateKernelError(GraphonReduceError):
    """The kernel integrates to zero (empty graphon) or has a tied leading eigenvalue."""


class NumericalBlowupError(GraphonReduceError, FloatingPointError):
    """The right-hand side produced NaN or inf."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:g})")
        self.time = time


class SolverError(GraphonReduceError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(GraphonReduceError, ValueError):
    """An experiment configuration is malformed or has unknown keys."""
