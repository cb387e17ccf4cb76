"""Shared exception types."""


class GiNetError(Exception):
    """Base class for all library errors."""


class ShapeError(GiNetError):
    """Operands have incompatible shapes."""


class ConfigError(GiNetError):
    """Invalid configuration value or unknown option."""


class ParseError(GiNetError):
    """Malformed input file."""


class DataError(GiNetError):
    """Input data violates a documented contract."""


class InsufficientCyclesError(ConfigError, DataError):
    """Fewer cycles than the split needs; both a config and a data problem."""


class GradientError(GiNetError):
    """Backward pass requested on an unsuitable tensor."""


class DivergenceError(GiNetError):
    """Training produced a non-finite loss."""
