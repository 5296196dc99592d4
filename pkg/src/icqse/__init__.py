"""Quantum subspace expansion on classical-shadow data, simulated at desk scale."""

from .errors import (ConfigError, ConsistencyError, CostWarning, DimensionError, NumericalError,
                     QSEError, ResourceError)
from .pauli import PauliString, PauliSum, dense, mul, pow, random_pauli, sum_mul
from .results import EnergyEstimate

__version__ = "0.1.0"
