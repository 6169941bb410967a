"""Neural functionally generated portfolios.

Learns the generating function of a functionally generated portfolio with an
input-convex network trained to maximise log return relative to the market,
and benchmarks it against classical generators in a walk-forward backtest.
"""

from .errors import ConfigError, DataError, DimensionError, NeuralFgpError, NumericError

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "NeuralFgpError",
    "NumericError",
]

__version__ = "0.1.0"
