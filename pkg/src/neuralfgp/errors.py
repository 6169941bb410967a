"""Exception hierarchy shared across the package.

Each class maps to a CLI exit code (see cli.EXIT_CODES).
"""


class NeuralFgpError(Exception):
    """Base class for all package errors."""


class ConfigError(NeuralFgpError):
    """Invalid configuration or arguments. Exit code 2."""


class DataError(NeuralFgpError):
    """Bad or insufficient market data. Exit code 3."""


class NumericError(NeuralFgpError):
    """Non-finite values or numerical breakdown. Exit code 4."""


class DimensionError(ConfigError):
    """Shape mismatch between operands or parameters."""
