"""Exception types raised across the package."""


class ModemFuseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ModemFuseError, ValueError):
    """Invalid parameters, unsupported formats or malformed experiment configs."""


class InputError(ModemFuseError, ValueError):
    """Observation data that cannot be parsed or violates its shape contract."""


class NumericError(ModemFuseError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class DegenerateInputError(NumericError):
    """Inputs for which an estimator is undefined (e.g. an all-zero symbol vector)."""


class DegenerateStatisticsError(NumericError):
    """Posterior statistics that leave the M-step undefined."""


class EstimatorInapplicableError(ModemFuseError, ValueError):
    """A blind estimator was requested for a constellation it cannot handle."""
