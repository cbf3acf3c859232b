"""Exception types shared across the package."""


class TokenMixupError(Exception):
    """Base class for all package errors."""


class ShapeError(TokenMixupError, ValueError):
    """Operand dimensions are incompatible."""


class NumericError(TokenMixupError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class UsageError(TokenMixupError, RuntimeError):
    """An API was called outside of its contract."""


class ConfigError(TokenMixupError, ValueError):
    """Invalid model or run configuration."""
