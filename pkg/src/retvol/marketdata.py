"""Tick-level trade data: parsing, validation and serialization.

The on-disk format is a headerless (or single-header) CSV with one trade per
line::

    timestamp_ms,price,volume

Session calendars are JSON arrays of ``{"date", "open_ms", "close_ms"}``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import EmptySeriesError, ParseError, ValidationError

MODULE = "marketdata"


@dataclass(frozen=True)
class TradeRecord:
    timestamp: int
    price: float
    volume: float

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValidationError("negative timestamp", module=MODULE)
        if not self.price > 0:
            raise ValidationError("nonpositive price", module=MODULE)
        if not self.volume > 0:
            raise ValidationError("nonpositive volume", module=MODULE)


@dataclass(frozen=True)
class Session:
    date: str
    open_ms: int
    close_ms: int

    def __post_init__(self):
        if self.close_ms < self.open_ms:
            raise ValidationError(f"session {self.date} closes before it opens", module=MODULE)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TradeSeries:
    """Trades for one symbol, stored column-wise and sorted by timestamp.

    Build instances with :meth:`from_arrays` (which sorts stably and checks
    the invariants) or :func:`parse_trades`.
    """

    symbol: str
    timestamps: np.ndarray
    prices: np.ndarray
    volumes: np.ndarray
    sessions: tuple[Session, ...] | None = None
    _session_index: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_arrays(
        cls,
        symbol: str,
        timestamps,
        prices,
        volumes,
        sessions: Iterable[Session] | None = None,
    ) -> "TradeSeries":
        ts = np.asarray(timestamps, dtype=np.int64)
        px = np.asarray(prices, dtype=np.float64)
        vol = np.asarray(volumes, dtype=np.float64)
        if not (ts.shape == px.shape == vol.shape) or ts.ndim != 1:
            raise ValidationError("timestamp, price and volume columns differ in length", module=MODULE)
        if ts.size and ts.min() < 0:
            raise ValidationError("negative timestamp", module=MODULE)
        if np.any(~(px > 0)) or not np.all(np.isfinite(px)):
            raise ValidationError("nonpositive or nonfinite price", module=MODULE)
        if np.any(~(vol > 0)) or not np.all(np.isfinite(vol)):
            raise ValidationError("nonpositive or nonfinite volume", module=MODULE)

        order = np.argsort(ts, kind="stable")
        ts, px, vol = ts[order], px[order], vol[order]

        sess = None
        sidx = None
        if sessions is not None:
            sess = tuple(sorted(sessions, key=lambda s: s.open_ms))
            sidx = _assign_sessions(ts, sess)
        return cls(symbol, _frozen(ts), _frozen(px), _frozen(vol), sess, None if sidx is None else _frozen(sidx))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def trades(self) -> tuple[TradeRecord, ...]:
        return tuple(
            TradeRecord(int(t), float(p), float(v))
            for t, p, v in zip(self.timestamps, self.prices, self.volumes)
        )

    @property
    def session_index(self) -> np.ndarray:
        """Session number of every trade; all zeros when there is no calendar."""
        if self._session_index is None:
            return np.zeros(len(self), dtype=np.int64)
        return self._session_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, TradeSeries):
            return NotImplemented
        return (
            self.symbol == other.symbol
            and self.sessions == other.sessions
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.prices, other.prices)
            and np.array_equal(self.volumes, other.volumes)
        )

    __hash__ = None

    def without_opening_trades(self) -> "TradeSeries":
        """Drop each session's opening print (all trades at its first timestamp).

        Without a session calendar the whole series is one session.
        """
        sidx = self.session_index
        first = np.ones(len(self), dtype=bool)
        if len(self):
            new_session = np.r_[True, sidx[1:] != sidx[:-1]]
            first_ts = np.maximum.accumulate(np.where(new_session, self.timestamps, -1))
            first = self.timestamps != first_ts
        return TradeSeries.from_arrays(
            self.symbol, self.timestamps[first], self.prices[first], self.volumes[first], self.sessions
        )


def _assign_sessions(ts: np.ndarray, sessions: tuple[Session, ...]) -> np.ndarray:
    opens = np.array([s.open_ms for s in sessions], dtype=np.int64)
    closes = np.array([s.close_ms for s in sessions], dtype=np.int64)
    if np.any(opens[1:] <= closes[:-1]):
        raise ValidationError("overlapping sessions in calendar", module=MODULE)
    idx = np.searchsorted(opens, ts, side="right") - 1
    bad = (idx < 0) | (ts > closes[np.clip(idx, 0, None)])
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"trade at {int(ts[i])} ms falls outside every session", module=MODULE)
    return idx.astype(np.int64)


def load_calendar(source: str | Path | TextIO) -> tuple[Session, ...]:
    """Read a session calendar from a JSON path, file object, or JSON text."""
    if hasattr(source, "read"):
        raw = json.load(source)
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("[")):
        raw = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        raw = json.loads(source)
    try:
        return tuple(Session(str(d["date"]), int(d["open_ms"]), int(d["close_ms"])) for d in raw)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad session calendar entry: {exc}", module=MODULE) from None


def _is_header(line: str) -> bool:
    s = line.lstrip()
    return bool(s) and not (s[0].isdigit() or s[0] in "+-.")


def parse_trades(
    source: str | TextIO,
    symbol: str,
    sessions: Iterable[Session] | None = None,
    include_opening_auction: bool = True,
) -> TradeSeries:
    """Parse tick-CSV text into a sorted :class:`TradeSeries`.

    ``source`` is either the CSV text itself or a readable text stream.
    Equal timestamps keep their file order.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    ts: list[int] = []
    px: list[float] = []
    vol: list[float] = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        if lineno == 1 and _is_header(line):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"malformed record, expected 3 fields, line {lineno}", line=lineno, module=MODULE)
        try:
            t = int(parts[0])
            p = float(parts[1])
            v = float(parts[2])
        except ValueError:
            raise ParseError(f"malformed record, line {lineno}", line=lineno, module=MODULE) from None
        if not (math.isfinite(p) and math.isfinite(v)):
            raise ParseError(f"nonfinite value, line {lineno}", line=lineno, module=MODULE)
        if t < 0:
            raise ValidationError(f"negative timestamp, line {lineno}", module=MODULE)
        if p <= 0:
            raise ValidationError(f"nonpositive price, line {lineno}", module=MODULE)
        if v <= 0:
            raise ValidationError(f"nonpositive volume, line {lineno}", module=MODULE)
        ts.append(t)
        px.append(p)
        vol.append(v)
    if not ts:
        raise EmptySeriesError(f"no trades for {symbol!r}", module=MODULE)
    series = TradeSeries.from_arrays(symbol, ts, px, vol, sessions)
    if not include_opening_auction:
        series = series.without_opening_trades()
    return series


def read_trades(path: str | Path, symbol: str | None = None, **kwargs) -> TradeSeries:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_trades(fh, symbol or path.stem, **kwargs)


def serialize_trades(series: TradeSeries, header: bool = True) -> str:
    """Inverse of :func:`parse_trades`; floats use ``repr`` so values round-trip.

    Whole-share volumes are written without a decimal point.
    """
    out = ["timestamp_ms,price,volume"] if header else []
    out.extend(
        f"{t},{p!r},{int(v) if v.is_integer() else repr(v)}"
        for t, p, v in zip(series.timestamps.tolist(), series.prices.tolist(), series.volumes.tolist())
    )
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ValidationReport:
    n: int
    duplicates: int
    outliers: int
    outlier_indices: tuple[int, ...] = ()
    threshold: float = 5.0
    window: int = 50

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "duplicates": self.duplicates,
            "outliers": self.outliers,
            "outlier_indices": list(self.outlier_indices),
            "threshold": self.threshold,
            "window": self.window,
        }


def rolling_std(x: np.ndarray, window: int, min_periods: int) -> np.ndarray:
    """Trailing sample std of the ``window`` values before each position (NaN if too few)."""
    n = x.size
    c1 = np.r_[0.0, np.cumsum(x)]
    c2 = np.r_[0.0, np.cumsum(x * x)]
    end = np.arange(n)
    start = np.maximum(end - window, 0)
    cnt = end - start
    s1 = c1[end] - c1[start]
    s2 = c2[end] - c2[start]
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (s2 - s1 * s1 / cnt) / (cnt - 1)
    var = np.where(cnt >= max(min_periods, 2), np.maximum(var, 0.0), np.nan)
    return np.sqrt(var)


def validate(
    series: TradeSeries,
    threshold: float = 5.0,
    window: int = 50,
    min_periods: int = 10,
) -> ValidationReport:
    """Count duplicate timestamps and price-jump outliers; never mutates ``series``.

    A trade is an outlier when its log price change exceeds ``threshold``
    times the sample std of the preceding ``window`` log price changes.
    """
    n = len(series)
    if n == 0:
        raise EmptySeriesError(f"no trades for {series.symbol!r}", module=MODULE)
    ts = series.timestamps
    duplicates = int(np.count_nonzero(ts[1:] == ts[:-1]))

    outliers: tuple[int, ...] = ()
    if n > 2:
        d = np.diff(np.log(series.prices))
        # no jump statistics across session boundaries
        sidx = series.session_index
        same = sidx[1:] == sidx[:-1]
        sigma = rolling_std(d, window, min_periods)
        with np.errstate(invalid="ignore"):
            hit = same & (sigma > 0) & (np.abs(d) > threshold * sigma)
        outliers = tuple(int(i) + 1 for i in np.flatnonzero(hit))
    return ValidationReport(n, duplicates, len(outliers), outliers, threshold, window)
