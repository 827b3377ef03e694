"""Pathwise simulation of porous-medium and fast-diffusion equations with rough multiplicative noise."""

__version__ = "0.1.0"

from .errors import (ConfigError, NonnegativityError, NumericalError, ParameterError,
                     RoughPMEError, SolverError, StabilityError)

__all__ = [
    "__version__",
    "ConfigError",
    "NonnegativityError",
    "NumericalError",
    "ParameterError",
    "RoughPMEError",
    "SolverError",
    "StabilityError",
]
