"""Empirical CCDFs and power-law tail exponents.

Two estimators are provided: an unweighted least-squares line through the
log-log CCDF tail, and the Hill estimator on the top order statistics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ComparabilityError,
    DegenerateSampleError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    InsufficientRangeError,
    InsufficientTailError,
    ParameterError,
)

MODULE = "tails"

DEFAULT_TAIL_FRACTION = 0.01
MIN_LS_POINTS = 10


class Method(str, enum.Enum):
    LEAST_SQUARES = "ls"
    HILL = "hill"


@dataclass(frozen=True, eq=False)
class Ccdf:
    """P(X > x) at the distinct positive sample values, with P = 0 points dropped."""

    xs: np.ndarray
    ps: np.ndarray
    n: int

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ps = np.asarray(self.ps, dtype=np.float64)
        if xs.shape != ps.shape or xs.ndim != 1 or xs.size == 0:
            raise ParameterError("xs and ps must be equal-length nonempty vectors", module=MODULE)
        if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
            raise ParameterError("xs must be positive and strictly increasing", module=MODULE)
        if np.any(ps <= 0) or np.any(ps > 1) or np.any(np.diff(ps) > 0):
            raise ParameterError("ps must lie in (0, 1] and be nonincreasing", module=MODULE)
        xs.setflags(write=False)
        ps.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ps", ps)

    def __len__(self) -> int:
        return int(self.xs.size)

    def to_csv(self) -> str:
        return "x,p\n" + "".join(f"{x!r},{p!r}\n" for x, p in zip(self.xs.tolist(), self.ps.tolist()))


def ccdf(sample) -> Ccdf:
    """Empirical complementary CDF of a nonnegative sample.

    Ties collapse to one point; zeros count toward ``n`` but are not plotted.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size == 0:
        raise DegenerateSampleError("empty sample", module=MODULE)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("sample must be nonnegative", module=MODULE)
    n = x.size
    vals, counts = np.unique(x, return_counts=True)
    above = n - np.cumsum(counts)
    keep = (vals > 0) & (above > 0)
    if not np.any(keep):
        raise DegenerateSampleError("need at least two distinct positive values", module=MODULE)
    return Ccdf(vals[keep], above[keep] / n, n)


@dataclass(frozen=True)
class TailFit:
    alpha: float
    stderr: float
    method: Method
    k_used: int
    x_range: tuple[float, float]
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise FitFailureError(f"nonpositive tail exponent {self.alpha}", module=MODULE)
        if self.k_used < 1:
            raise ParameterError("k_used must be >= 1", module=MODULE)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "stderr": self.stderr,
            "method": self.method.value,
            "k_used": self.k_used,
            "x_range": list(self.x_range),
            "params": dict(self.params),
        }


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and slope standard error."""
    n = x.size
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = dx @ dx
    slope = (dx @ (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    se = math.sqrt(max(resid @ resid, 0.0) / (n - 2) / sxx) if n > 2 else 0.0
    return float(slope), float(intercept), se


def fit_powerlaw_ls(c: Ccdf, tail_fraction: float = DEFAULT_TAIL_FRACTION) -> TailFit:
    """Least-squares fit of ``ln p = a - alpha ln x`` over the largest CCDF points.

    The tail region is the largest ``ceil(tail_fraction * len(c))`` distinct xs.
    """
    if not 0 < tail_fraction <= 1:
        raise ParameterError("tail_fraction must lie in (0, 1]", module=MODULE)
    m = math.ceil(tail_fraction * len(c))
    if m < MIN_LS_POINTS:
        raise InsufficientTailError(
            f"{m} CCDF points in the tail region, need {MIN_LS_POINTS}", module=MODULE
        )
    xs = c.xs[-m:]
    ps = c.ps[-m:]
    slope, _, se = _ols(np.log(xs), np.log(ps))
    if not -slope > 0:
        raise FitFailureError(f"fitted tail exponent {-slope:.4g} is not positive", module=MODULE)
    return TailFit(-slope, se, Method.LEAST_SQUARES, m, (float(xs[0]), float(xs[-1])),
                   {"tail_fraction": tail_fraction})


def default_hill_k(n: int) -> int:
    return max(100, int(0.01 * n))


def hill(sample, k: int | None = None) -> TailFit:
    """Hill estimator from the ``k`` largest values.

    ``alpha = 1 / (mean(log X_(1..k)) - log X_(k+1))`` with the sample sorted
    in decreasing order; the standard error is ``alpha / sqrt(k)``.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    n = x.size
    if k is None:
        k = default_hill_k(n)
    if int(k) != k or not 1 <= k < n:
        raise ParameterError(f"Hill k={k} outside [1, {n - 1}]", module=MODULE)
    k = int(k)
    # top k+1 values, unordered except that the (k+1)-th largest sits at index n-k-1
    part = np.partition(x, n - k - 1)
    top = part[n - k:]
    xk1 = part[n - k - 1]
    if not xk1 > 0:
        raise DomainError("nonpositive value among the top k+1 order statistics", module=MODULE)
    # ratios first: scaling X by c cancels before the log
    gamma = float(np.mean(np.log(top / xk1)))
    if not gamma > 0:
        raise FitFailureError("top k values are all equal to X_(k+1)", module=MODULE)
    alpha = 1.0 / gamma
    return TailFit(alpha, alpha / math.sqrt(k), Method.HILL, k, (float(xk1), float(top.max())), {"k": k})


def resample_loglog(c: Ccdf, grid: np.ndarray) -> np.ndarray:
    """ln P at ``grid`` by linear interpolation of ln P against ln x."""
    return np.interp(np.log(grid), np.log(c.xs), np.log(c.ps))


def local_slopes(
    c: Ccdf,
    n_bins: int = 100,
    window: int = 5,
    n_emit: int = 25,
) -> tuple[np.ndarray, np.ndarray]:
    """Locally fitted log-log slopes of a CCDF.

    The CCDF is resampled on ``n_bins`` log-spaced abscissae spanning its
    support; each bin's slope is the least-squares slope over ``window``
    consecutive bins centred on it (shifted inward at the edges).  The
    rightmost ``n_emit`` bins are returned as ``(x_centers, slopes)``.

    Near either end the window is truncated rather than shifted, so the edge
    bins keep a slope of their own (from at least ``window // 2 + 1`` points).
    """
    if not (n_bins >= window >= 2) or not 1 <= n_emit <= n_bins:
        raise ParameterError("need n_bins >= window >= 2 and 1 <= n_emit <= n_bins", module=MODULE)
    lo, hi = float(c.xs[0]), float(c.xs[-1])
    if hi < 10 * lo:
        raise InsufficientRangeError(f"CCDF spans {hi / lo:.3g}x, need one decade", module=MODULE)
    lx = np.linspace(math.log(lo), math.log(hi), n_bins)
    grid = np.exp(lx)
    grid[0], grid[-1] = lo, hi
    ly = resample_loglog(c, grid)

    h = window // 2
    idx = np.arange(n_bins)[:, None] + np.arange(-h, window - h)[None, :]
    w = ((idx >= 0) & (idx < n_bins)).astype(np.float64)
    idx = np.clip(idx, 0, n_bins - 1)
    X, Y = lx[idx], ly[idx]
    cnt = w.sum(axis=1, keepdims=True)
    dx = (X - (w * X).sum(axis=1, keepdims=True) / cnt) * w
    dy = Y - (w * Y).sum(axis=1, keepdims=True) / cnt
    slopes = (dx * dy).sum(axis=1) / (dx * dx).sum(axis=1)
    return grid[-n_emit:], slopes[-n_emit:]


def local_ratio(slopes_r, slopes_v) -> np.ndarray:
    """Bin-wise ratio of return to volume local slopes."""
    return np.asarray(slopes_r, dtype=np.float64) / np.asarray(slopes_v, dtype=np.float64)


def tail_ratio(fit_r: TailFit, fit_v: TailFit) -> tuple[float, float]:
    """Return ``(xi, xi_err)`` with ``xi = alpha_r / alpha_V`` and first-order error propagation."""
    if fit_r.method != fit_v.method:
        raise ComparabilityError(
            f"cannot compare {fit_r.method.value} and {fit_v.method.value} exponents", module=MODULE
        )
    xi = fit_r.alpha / fit_v.alpha
    err = math.hypot(fit_r.stderr / fit_v.alpha, fit_r.alpha * fit_v.stderr / fit_v.alpha**2)
    return xi, err


@dataclass(frozen=True)
class RatioRow:
    """One symbol's return/volume exponents under both estimators."""

    symbol: str
    ls_r: TailFit
    ls_v: TailFit
    hill_r: TailFit
    hill_v: TailFit

    @property
    def ratio_ls(self) -> float:
        return tail_ratio(self.ls_r, self.ls_v)[0]

    @property
    def ratio_hill(self) -> float:
        return tail_ratio(self.hill_r, self.hill_v)[0]

    def values(self) -> dict[str, float]:
        return {
            "alpha_r_ls": self.ls_r.alpha,
            "alpha_v_ls": self.ls_v.alpha,
            "ratio_ls": self.ratio_ls,
            "alpha_r_hill": self.hill_r.alpha,
            "hill_err_r": self.hill_r.stderr,
            "alpha_v_hill": self.hill_v.alpha,
            "hill_err_v": self.hill_v.stderr,
            "ratio_hill": self.ratio_hill,
        }


TABLE_COLUMNS = (
    "alpha_r_ls", "alpha_v_ls", "ratio_ls",
    "alpha_r_hill", "hill_err_r", "alpha_v_hill", "hill_err_v", "ratio_hill",
)


def fit_pair(symbol: str, abs_returns, volumes, tail_fraction: float = DEFAULT_TAIL_FRACTION,
             hill_k: int | None = None) -> RatioRow:
    """Fit both tails of one symbol with both estimators."""
    r = np.abs(np.asarray(abs_returns, dtype=np.float64))
    v = np.asarray(volumes, dtype=np.float64)
    return RatioRow(
        symbol,
        fit_powerlaw_ls(ccdf(r), tail_fraction),
        fit_powerlaw_ls(ccdf(v), tail_fraction),
        hill(r, hill_k if hill_k is not None else default_hill_k(r.size)),
        hill(v, hill_k if hill_k is not None else default_hill_k(v.size)),
    )


@dataclass(frozen=True)
class Summary:
    mean: dict[str, float]
    std: dict[str, float]
    n_rows: int


def summarize(rows: Sequence[RatioRow] | Sequence[dict]) -> Summary:
    """Unweighted column means and sample standard deviations."""
    if len(rows) < 2:
        raise InsufficientDataError(f"summary needs >= 2 rows, got {len(rows)}", module=MODULE)
    table = [r.values() if isinstance(r, RatioRow) else dict(r) for r in rows]
    cols = [c for c in TABLE_COLUMNS if all(c in t for t in table)] or sorted(table[0])
    mean = {}
    std = {}
    for c in cols:
        a = np.array([t[c] for t in table], dtype=np.float64)
        mean[c] = float(a.mean())
        std[c] = float(a.std(ddof=1))
    return Summary(mean, std, len(rows))


def _fmt(x: float) -> str:
    return repr(float(x))


def table_csv(rows: Sequence[RatioRow], summary: Summary | None = None) -> str:
    """Per-symbol exponent table with optional ``MEAN``/``STD`` rows."""
    lines = ["symbol," + ",".join(TABLE_COLUMNS)]
    for row in rows:
        vals = row.values()
        lines.append(row.symbol + "," + ",".join(_fmt(vals[c]) for c in TABLE_COLUMNS))
    if summary is not None:
        for label, d in (("MEAN", summary.mean), ("STD", summary.std)):
            lines.append(label + "," + ",".join(_fmt(d[c]) if c in d else "" for c in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"
