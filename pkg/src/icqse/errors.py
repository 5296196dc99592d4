"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError -> 3,
ResourceError -> 4.
"""


class QSEError(Exception):
    pass


class ConfigError(QSEError, ValueError):
    """Invalid argument, configuration or input file."""


class DimensionError(ConfigError):
    """Operands act on different numbers of qubits."""


class ConsistencyError(QSEError):
    """Inputs that should agree do not (e.g. a Pauli missing from an evaluation table)."""


class NumericalError(QSEError, ArithmeticError):
    """A numerical procedure failed or is ill-posed."""


class ResourceError(QSEError):
    """Requested problem size exceeds a hard cap."""


class CostWarning(UserWarning):
    """Raised for requests that are legal but statistically or computationally wasteful."""
