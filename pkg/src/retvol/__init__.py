"""Tail exponents of returns and trading volume, price impact and q-Gaussian fits."""

__version__ = "0.1.0"

from .bars import AggregationScheme, BarSeries, aggregate, normalize_volume, standardize
from .errors import RetvolError
from .marketdata import TradeRecord, TradeSeries, parse_trades, serialize_trades, validate
from .tails import Ccdf, TailFit, ccdf, fit_powerlaw_ls, hill, local_slopes, summarize, tail_ratio

__all__ = [
    "AggregationScheme",
    "BarSeries",
    "Ccdf",
    "RetvolError",
    "TailFit",
    "TradeRecord",
    "TradeSeries",
    "aggregate",
    "ccdf",
    "fit_powerlaw_ls",
    "hill",
    "local_slopes",
    "normalize_volume",
    "parse_trades",
    "serialize_trades",
    "standardize",
    "summarize",
    "tail_ratio",
    "validate",
]
