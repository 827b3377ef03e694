"""Exception hierarchy shared by every module."""


class RoughPMEError(Exception):
    """Base class for all package errors."""


class ParameterError(RoughPMEError, ValueError):
    """An argument is outside its admissible range."""


class NumericalError(RoughPMEError, ArithmeticError):
    """A factorization or linear solve failed."""


class SolverError(RoughPMEError):
    """Newton iteration did not converge.

    Carries the last max-norm residual and, when raised from a full solve,
    the index of the failing time step.
    """

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class StabilityError(SolverError):
    """The implicit reaction diagonal 1 - dt*a lost positivity."""


class NonnegativityError(ParameterError):
    """Signed initial data passed where nonnegative data is required."""


class ConfigError(RoughPMEError):
    """Invalid experiment configuration text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
