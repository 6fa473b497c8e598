"""Batch-size schedules for one-pass SGD on power-law linear regression."""
from ._backend import NAME as BACKEND
from .errors import (BatchSchedError, DimensionError, DomainError, InfeasibleError,
                     InstabilityError, RegimeError)
from .model import ProblemSpec, Regime, Spectrum, excess_risk, make_spectrum, regime

__all__ = [
    "BACKEND", "BatchSchedError", "DimensionError", "DomainError", "InfeasibleError",
    "InstabilityError", "RegimeError", "ProblemSpec", "Regime", "Spectrum",
    "excess_risk", "make_spectrum", "regime",
]
__version__ = "0.1.0"
