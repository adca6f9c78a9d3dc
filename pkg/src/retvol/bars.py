"""Aggregation of trades into paired (return, volume) bars.

Two interval schemes are supported: fixed clock windows of ``delta_t``
minutes and blocks of ``n_trades`` consecutive transactions.  Returns are
log price changes standardized to zero mean and unit sample variance;
volumes are divided by their sample mean.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVolumeError,
    EmptySeriesError,
    InsufficientDataError,
    ParameterError,
    ZeroVarianceError,
)
from .marketdata import TradeSeries

MODULE = "bars"


class SchemeKind(str, enum.Enum):
    CLOCK = "clock"
    TRADES = "trades"


@dataclass(frozen=True)
class AggregationScheme:
    kind: SchemeKind
    delta_t: float | None = None
    n_trades: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.kind is SchemeKind.CLOCK:
            if self.n_trades is not None or self.delta_t is None or not self.delta_t > 0:
                raise ParameterError("clock scheme needs delta_t > 0 and no n_trades", module=MODULE)
            if round(self.delta_t * 60_000) < 1:
                raise ParameterError("delta_t is shorter than one millisecond", module=MODULE)
        else:
            if self.delta_t is not None or self.n_trades is None or int(self.n_trades) != self.n_trades or self.n_trades < 1:
                raise ParameterError("trade-count scheme needs integer n_trades >= 1 and no delta_t", module=MODULE)
            object.__setattr__(self, "n_trades", int(self.n_trades))

    @classmethod
    def clock(cls, minutes: float) -> "AggregationScheme":
        return cls(SchemeKind.CLOCK, delta_t=float(minutes))

    @classmethod
    def trades(cls, n: int) -> "AggregationScheme":
        return cls(SchemeKind.TRADES, n_trades=n)

    @property
    def delta_ms(self) -> int:
        return int(round(self.delta_t * 60_000))

    @property
    def label(self) -> str:
        if self.kind is SchemeKind.CLOCK:
            return f"dt{self.delta_t:g}min"
        return f"nT{self.n_trades}"

    def to_dict(self) -> dict:
        if self.kind is SchemeKind.CLOCK:
            return {"kind": "clock", "delta_t_min": self.delta_t}
        return {"kind": "trades", "n_trades": self.n_trades}


def standardize(raw) -> np.ndarray:
    """Subtract the mean and divide by the sample (T-1) standard deviation."""
    x = np.asarray(raw, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError("standardization needs at least 2 values", module=MODULE)
    mean = x.mean()
    std = x.std(ddof=1)
    # spread at rounding level of the data is treated as no spread
    if not std > 8 * np.finfo(float).eps * np.max(np.abs(x)):
        raise ZeroVarianceError("returns have zero variance", module=MODULE)
    return (x - mean) / std


def normalize_volume(raw) -> np.ndarray:
    """Divide volumes by their sample mean."""
    v = np.asarray(raw, dtype=np.float64)
    if v.size < 1:
        raise InsufficientDataError("no volumes to normalize", module=MODULE)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ParameterError("volumes must be finite and nonnegative", module=MODULE)
    mean = v.mean()
    if not mean > 0:
        raise DegenerateVolumeError("all volumes are zero", module=MODULE)
    return v / mean


@dataclass(frozen=True, eq=False)
class BarSeries:
    symbol: str
    scheme: AggregationScheme
    raw_returns: np.ndarray
    returns: np.ndarray
    volumes: np.ndarray
    raw_volumes: np.ndarray

    @classmethod
    def from_raw(cls, symbol: str, scheme: AggregationScheme, raw_returns, raw_volumes) -> "BarSeries":
        R = np.asarray(raw_returns, dtype=np.float64)
        V = np.asarray(raw_volumes, dtype=np.float64)
        if R.shape != V.shape or R.ndim != 1:
            raise ParameterError("returns and volumes differ in length", module=MODULE)
        if R.size < 2:
            raise InsufficientDataError(f"{symbol}: {R.size} usable intervals under {scheme.label}, need 2", module=MODULE)
        arrays = [R, standardize(R), normalize_volume(V), V]
        for a in arrays:
            a.setflags(write=False)
        return cls(symbol, scheme, *arrays)

    @property
    def k_count(self) -> int:
        return int(self.returns.size)

    def __len__(self) -> int:
        return self.k_count

    def to_csv(self) -> str:
        lines = ["k,raw_return,return,volume"]
        lines.extend(
            f"{k},{R!r},{r!r},{v!r}"
            for k, (R, r, v) in enumerate(zip(self.raw_returns.tolist(), self.returns.tolist(), self.volumes.tolist()))
        )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "symbol": self.symbol,
            "scheme": self.scheme.to_dict(),
            "T": self.k_count,
            "raw_returns": self.raw_returns.tolist(),
            "returns": self.returns.tolist(),
            "volumes": self.volumes.tolist(),
            "raw_volumes": self.raw_volumes.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def trade_blocks(series: TradeSeries, n_trades: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partition trades into full blocks of ``n_trades``; remainder is dropped.

    Returns ``(last_price, volume_sum, session_of_last_trade)`` per block.
    """
    m = len(series) // n_trades
    used = m * n_trades
    last = np.arange(n_trades - 1, used, n_trades)
    vol = series.volumes[:used].reshape(m, n_trades).sum(axis=1)
    return series.prices[last], vol, series.session_index[last]


def _aggregate_trades(series: TradeSeries, n_trades: int) -> tuple[np.ndarray, np.ndarray]:
    if n_trades > len(series):
        raise ParameterError(f"n_trades={n_trades} exceeds the {len(series)} trades available", module=MODULE)
    last_px, vol, sess = trade_blocks(series, n_trades)
    R = np.diff(np.log(last_px))
    keep = sess[1:] == sess[:-1]
    return R[keep], vol[1:][keep]


def _aggregate_clock(series: TradeSeries, delta_ms: int) -> tuple[np.ndarray, np.ndarray]:
    ts = series.timestamps
    sidx = series.session_index
    if series.sessions is None:
        origin = np.full(ts.size, (ts[0] // delta_ms) * delta_ms, dtype=np.int64)
    else:
        opens = np.array([s.open_ms for s in series.sessions], dtype=np.int64)
        origin = opens[sidx]
    window = (ts - origin) // delta_ms

    new_group = np.r_[True, (window[1:] != window[:-1]) | (sidx[1:] != sidx[:-1])]
    starts = np.flatnonzero(new_group)
    ends = np.r_[starts[1:], ts.size] - 1
    logp = np.log(series.prices)
    vol = np.add.reduceat(series.volumes, starts)

    # reference: last price before the window, or the session's first price
    # for the session's first populated window
    first_in_session = np.r_[True, sidx[starts[1:]] != sidx[starts[:-1]]]
    ref = np.where(first_in_session, logp[starts], logp[np.maximum(starts - 1, 0)])
    R = logp[ends] - ref
    return R, vol


def aggregate_raw(series: TradeSeries, scheme: AggregationScheme) -> tuple[np.ndarray, np.ndarray]:
    """Raw log returns and volume sums per interval, before any normalization.

    Clock windows are ``[t, t + delta_t)``; a window's return runs from the
    last price before it (or the session's first price) to its last price, and
    empty windows are dropped.  Trade blocks hold exactly ``n_trades`` trades;
    the first block only supplies a reference price.  With a session calendar,
    clock windows are anchored at each session open and no return spans two
    sessions.
    """
    if len(series) == 0:
        raise EmptySeriesError(f"no trades for {series.symbol!r}", module=MODULE)
    if scheme.kind is SchemeKind.TRADES:
        return _aggregate_trades(series, scheme.n_trades)
    return _aggregate_clock(series, scheme.delta_ms)


def aggregate(series: TradeSeries, scheme: AggregationScheme) -> BarSeries:
    """Build the standardized bar series for ``series`` under ``scheme``."""
    R, V = aggregate_raw(series, scheme)
    return BarSeries.from_raw(series.symbol, scheme, R, V)


def pool(bars: list[BarSeries], symbol: str = "POOLED") -> BarSeries:
    """Concatenate already standardized bars of several symbols.

    Each input is standardized on its own, so the pooled ``returns`` and
    ``volumes`` are the concatenated per-symbol values, re-standardized as a
    whole (a no-op up to rounding when every input is already standardized).
    """
    if not bars:
        raise InsufficientDataError("nothing to pool", module=MODULE)
    scheme = bars[0].scheme
    r = np.concatenate([b.returns for b in bars])
    v = np.concatenate([b.volumes for b in bars])
    raw_v = np.concatenate([b.raw_volumes for b in bars])
    arrays = [r, standardize(r), normalize_volume(v), raw_v]
    for a in arrays:
        a.setflags(write=False)
    return BarSeries(symbol, scheme, *arrays)
