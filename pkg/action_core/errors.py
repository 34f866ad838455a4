"""Error types raised across the package."""


class ActionKitError(Exception):
    """Base class for every error raised by action_core."""


class ShapeError(ActionKitError, ValueError):
    """Tensor extents, ranks or layer shapes do not agree."""


class DataError(ActionKitError, ValueError):
    """Labels, samples or datasets violate their contract."""


class NumericError(ActionKitError, ArithmeticError):
    """A computation produced non-finite values."""


class ConfigError(ActionKitError, ValueError):
    """Invalid configuration value or unknown option."""


class DomainError(ActionKitError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class IoError(ActionKitError, OSError):
    """A file could not be read or written."""
