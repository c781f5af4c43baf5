"""Exception types shared across the package."""

from __future__ import annotations


class PdcboError(Exception):
    """Base class for package-specific failures."""


class DimensionMismatchError(PdcboError, ValueError):
    """An input vector does not match the declared dimensionality."""


class InvalidArgumentError(PdcboError, ValueError):
    """A value is outside its documented domain (e.g. delta not in (0,1))."""


class FactorizationError(PdcboError, ArithmeticError):
    """PSD factorization failed even after the jitter ladder.

    Carries the jitter levels that were attempted so callers can see how
    far the recovery went.
    """

    def __init__(self, message: str, jitters: tuple[float, ...]):
        super().__init__(f"{message} (jitter levels tried: {list(jitters)})")
        self.jitters = jitters


class NegativeVarianceError(PdcboError, ArithmeticError):
    """Predictive variance came out below the roundoff tolerance."""


class SteadyStateError(PdcboError, RuntimeError):
    """The reactor mass-balance solve did not converge or left the model domain."""

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class InfeasibleContextError(PdcboError, RuntimeError):
    """No lattice point satisfies all constraints for the given context."""


class ConfigError(PdcboError, ValueError):
    """An experiment configuration failed validation."""


class StepError(PdcboError, RuntimeError):
    """A numeric failure inside an optimization run, annotated with the step."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause
