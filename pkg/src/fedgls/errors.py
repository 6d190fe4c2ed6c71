"""Exception types shared across the simulator.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
anything else -> 3.
"""


class FedglsError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FedglsError, ValueError):
    """Matrix or parameter shapes are inconsistent."""


class ParameterError(FedglsError, ValueError):
    """An argument value is outside its documented domain."""


class EvaluationError(FedglsError, ArithmeticError):
    """A computation produced a non-finite value where finiteness is required."""


class ConfigError(FedglsError, ValueError):
    """Configuration file or flag override is invalid."""


class DataError(FedglsError, ValueError):
    """Dataset files are malformed or violate graph invariants."""
