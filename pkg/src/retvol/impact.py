"""Price impact: returns conditioned on traded volume.

Covers the return/volume scatter, tail fits of |r| in volume bands, the
conditional expectation E(r^2 | V) with its linear-law regression, surrogate
returns built from volumes through an exact impact law, and the mapping from
the tail-exponent ratio to the impact exponent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bars import AggregationScheme, BarSeries
from .errors import DomainError, InsufficientDataError, ParameterError, RetvolError
from .tails import DEFAULT_TAIL_FRACTION, Ccdf, TailFit, ccdf, fit_powerlaw_ls

MODULE = "impact"

DEFAULT_BREAKPOINTS = (100.0, 1000.0)
DEFAULT_BETAS = (0.3, 0.5, 0.7)
DEFAULT_V_MIN = 4.0
DEFAULT_N_BINS = 30
DEFAULT_MIN_BIN_COUNT = 30
MIN_BAND_COUNT = 100


@dataclass(frozen=True, eq=False)
class Scatter:
    volumes: np.ndarray
    abs_returns: np.ndarray
    quartiles: tuple[float, float, float]


def scatter(bars: BarSeries, raw_units: bool = True) -> Scatter:
    """(V, |r|) pairs and the volume quartiles (linear interpolation).

    Volumes are share counts by default, the units of the band breakpoints.
    """
    vol = bars.raw_volumes if raw_units else bars.volumes
    q = np.percentile(vol, [25, 50, 75], method="linear")
    return Scatter(vol, np.abs(bars.returns), tuple(float(x) for x in q))


@dataclass(frozen=True)
class Band:
    v_lo: float
    v_hi: float
    count: int
    fit: TailFit | None
    flag: str | None = None
    ccdf: Ccdf | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "v_lo": self.v_lo,
            "v_hi": self.v_hi,
            "count": self.count,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "flag": self.flag,
        }


@dataclass(frozen=True)
class ConditionalTailReport:
    bands: tuple[Band, ...]
    raw_units: bool
    tail_fraction: float

    def to_dict(self) -> dict:
        return {
            "raw_units": self.raw_units,
            "tail_fraction": self.tail_fraction,
            "bands": [b.to_dict() for b in self.bands],
        }


def band_index(volumes, breakpoints: Sequence[float]) -> np.ndarray:
    """Band of each volume: ``V <= b0`` is band 0, ``b_{i-1} < V <= b_i`` band i, above the last is the top band."""
    return np.searchsorted(np.asarray(breakpoints, dtype=np.float64), volumes, side="left")


def conditional_tails(
    bars: BarSeries,
    breakpoints: Sequence[float] = DEFAULT_BREAKPOINTS,
    raw_units: bool = True,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    min_count: int = MIN_BAND_COUNT,
) -> ConditionalTailReport:
    """CCDF and least-squares tail exponent of |r| within each volume band.

    Bands with fewer than ``min_count`` observations, or whose tail cannot be
    fitted, are reported with ``fit=None`` and a flag.
    """
    bp = [float(b) for b in breakpoints]
    if not bp or any(b <= 0 for b in bp) or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
        raise ParameterError("breakpoints must be increasing positive numbers", module=MODULE)
    vol = bars.raw_volumes if raw_units else bars.volumes
    absr = np.abs(bars.returns)
    idx = band_index(vol, bp)
    edges = [0.0, *bp, math.inf]
    bands = []
    for j in range(len(edges) - 1):
        sel = absr[idx == j]
        count = int(sel.size)
        fit = None
        c = None
        flag = None
        if count == 0:
            flag = "empty"
        elif count < min_count:
            flag = f"too few observations ({count} < {min_count})"
        else:
            try:
                c = ccdf(sel)
                fit = fit_powerlaw_ls(c, tail_fraction)
            except RetvolError as exc:
                flag = f"fit failed: {exc}"
        bands.append(Band(edges[j], edges[j + 1], count, fit, flag, c))
    return ConditionalTailReport(tuple(bands), raw_units, tail_fraction)


@dataclass(frozen=True, eq=False)
class ImpactCurve:
    bin_centers: np.ndarray
    e_r2: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    scheme: AggregationScheme | None = None
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT

    def to_csv(self) -> str:
        lines = ["v,e_r2,count,v_lo,v_hi"]
        for v, e, n, lo, hi in zip(self.bin_centers.tolist(), self.e_r2.tolist(), self.counts.tolist(),
                                   self.edges[:-1].tolist(), self.edges[1:].tolist()):
            lines.append(f"{v!r},{e!r},{n},{lo!r},{hi!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "bin_centers": self.bin_centers.tolist(),
            "e_r2": self.e_r2.tolist(),
            "counts": self.counts.tolist(),
            "edges": self.edges.tolist(),
            "scheme": None if self.scheme is None else self.scheme.to_dict(),
            "min_bin_count": self.min_bin_count,
        }


def merged_edges(volumes: np.ndarray, n_bins: int, min_bin_count: int) -> np.ndarray:
    """Log-spaced edges over the positive volume range, thin bins merged rightward.

    A trailing remainder still under ``min_bin_count`` is merged into the last
    full bin.
    """
    v = volumes[volumes > 0]
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        raise InsufficientDataError("volumes take a single value", module=MODULE)
    edges = np.geomspace(lo, hi, n_bins + 1)
    edges[0], edges[-1] = lo, hi
    counts = np.histogram(v, bins=edges)[0]

    keep = [edges[0]]
    acc = 0
    for j in range(n_bins):
        acc += counts[j]
        if acc >= min_bin_count:
            keep.append(edges[j + 1])
            acc = 0
    if acc > 0:
        if len(keep) > 1:
            keep[-1] = edges[-1]
        else:
            keep.append(edges[-1])
    return np.asarray(keep)


def expectation_curve(
    volumes,
    returns,
    n_bins: int = DEFAULT_N_BINS,
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
    scheme: AggregationScheme | None = None,
) -> ImpactCurve:
    """E(r^2 | V) on log-spaced volume bins.

    Bin centres are the mean volume of the observations in each bin.
    Bins are half-open ``[lo, hi)`` except the last, which includes ``hi``.
    """
    V = np.asarray(volumes, dtype=np.float64)
    r = np.asarray(returns, dtype=np.float64)
    if V.shape != r.shape:
        raise ParameterError("volumes and returns differ in length", module=MODULE)
    if n_bins < 1 or min_bin_count < 1:
        raise ParameterError("n_bins and min_bin_count must be positive", module=MODULE)
    pos = V > 0
    V, r = V[pos], r[pos]
    if V.size < n_bins * min_bin_count:
        raise InsufficientDataError(
            f"{V.size} observations, need n_bins * min_bin_count = {n_bins * min_bin_count}", module=MODULE
        )
    edges = merged_edges(V, n_bins, min_bin_count)
    nb = edges.size - 1
    idx = np.clip(np.searchsorted(edges, V, side="right") - 1, 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    centers = np.empty(nb)
    e_r2 = np.empty(nb)
    r2 = r * r
    for j in range(nb):
        m = idx == j
        centers[j] = V[m].mean()
        e_r2[j] = r2[m].mean()
    return ImpactCurve(centers, e_r2, counts, edges, scheme, min_bin_count)


def conditional_expectation(
    bars: BarSeries,
    n_bins: int = DEFAULT_N_BINS,
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
) -> ImpactCurve:
    return expectation_curve(bars.volumes, bars.returns, n_bins, min_bin_count, bars.scheme)


@dataclass(frozen=True)
class LinearImpactFit:
    a: float
    b: float
    r_squared: float
    v_min: float
    n_bins: int

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "r_squared": self.r_squared, "v_min": self.v_min, "n_bins": self.n_bins}


def fit_linear(curve: ImpactCurve, v_min: float = DEFAULT_V_MIN) -> LinearImpactFit:
    """Ordinary least squares ``E(r^2|V) = a + b V`` over bins centred at ``V >= v_min``."""
    m = curve.bin_centers >= v_min
    x = curve.bin_centers[m]
    y = curve.e_r2[m]
    if x.size < 3:
        raise InsufficientDataError(f"{x.size} bins at V >= {v_min}, need 3", module=MODULE)
    dx = x - x.mean()
    dy = y - y.mean()
    b = float(dx @ dy / (dx @ dx))
    a = float(y.mean() - b * x.mean())
    resid = y - (a + b * x)
    ss_tot = float(dy @ dy)
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot == 0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return LinearImpactFit(a, b, r2, float(v_min), int(x.size))


def surrogate_returns(volumes, beta: float) -> np.ndarray:
    """Artificial absolute returns ``c V^beta`` with ``c`` giving unit sample std."""
    if not 0 < beta < 1:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}", module=MODULE)
    V = np.asarray(volumes, dtype=np.float64)
    if np.any(~(V > 0)):
        raise ParameterError("surrogate returns need positive volumes", module=MODULE)
    raw = V**beta
    sd = raw.std(ddof=1)
    if not sd > 0:
        raise InsufficientDataError("volumes are constant; surrogate scale undefined", module=MODULE)
    return raw / sd


def implied_beta(xi: float) -> float:
    """Impact exponent implied by a tail ratio: ``beta = 1 / xi``."""
    if not xi > 1:
        raise DomainError(
            f"xi={xi} <= 1 would imply beta >= 1 (convex impact), outside 0 < beta < 1", module=MODULE
        )
    return 1.0 / xi


def surrogate_study(
    volumes,
    betas: Sequence[float] = DEFAULT_BETAS,
    n_bins: int = DEFAULT_N_BINS,
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
    v_min: float = DEFAULT_V_MIN,
    scheme: AggregationScheme | None = None,
) -> dict[float, tuple[ImpactCurve, LinearImpactFit]]:
    """E(r^2|V) curve and linear fit for surrogate returns at each beta, on shared volumes."""
    out = {}
    for beta in betas:
        curve = expectation_curve(volumes, surrogate_returns(volumes, beta), n_bins, min_bin_count, scheme)
        out[float(beta)] = (curve, fit_linear(curve, v_min))
    return out


def to_json(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True)
