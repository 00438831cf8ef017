"""Exception types shared across the package."""


class ImvccError(Exception):
    """Base class for all package errors."""


class DataError(ImvccError, ValueError):
    """Malformed or inconsistent input data."""


class ParameterError(ImvccError, ValueError):
    """An argument is outside its legal range."""


class ContractError(ImvccError, ValueError):
    """A caller broke a documented precondition (shapes, stale caches, ...)."""


class ConfigError(ImvccError, ValueError):
    """A configuration cannot be executed as requested."""


class TrainingError(ImvccError, RuntimeError):
    """Training produced non-finite values."""
