"""Synthetic markets with a known volume law and price-impact exponent."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qgauss
from .errors import GenerationError, ParameterError
from .marketdata import TradeSeries

MODULE = "synth"


def pareto_from_uniform(u, alpha: float, x_min: float):
    """Inverse transform ``x_min * u^(-1/alpha)`` for u in (0, 1]."""
    return x_min * np.asarray(u, dtype=np.float64) ** (-1.0 / alpha)


def gen_pareto(alpha: float, x_min: float, n: int, seed: int | np.random.Generator) -> np.ndarray:
    if not alpha > 0 or not x_min > 0:
        raise ParameterError("Pareto law needs alpha > 0 and x_min > 0", module=MODULE)
    if n < 1:
        raise ParameterError("n must be >= 1", module=MODULE)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return pareto_from_uniform(1.0 - rng.random(n), alpha, x_min)


@dataclass(frozen=True)
class ParetoLaw:
    alpha: float = 2.0
    x_min: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0 or not self.x_min > 0:
            raise ParameterError("Pareto law needs alpha > 0 and x_min > 0", module=MODULE)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return gen_pareto(self.alpha, self.x_min, n, rng)


@dataclass(frozen=True)
class QGaussianAbsLaw:
    """Absolute value of a zero-centred q-Gaussian with width ``sigma`` (in shares)."""

    q: float = 1.5
    sigma: float = 100.0

    def __post_init__(self):
        qgauss.QGaussianParams(self.q, 0.0, self.sigma)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.abs(qgauss.sample(qgauss.QGaussianParams(self.q, 0.0, self.sigma), n, rng))


@dataclass(frozen=True)
class MarketSpec:
    """Generative settings for :func:`gen_market`.

    ``return_scale`` is the target standard deviation of the per-trade log
    returns; it fixes the impact constant ``c``.
    """

    n_trades: int
    volume_law: ParetoLaw | QGaussianAbsLaw = field(default_factory=ParetoLaw)
    impact_beta: float = 0.5
    noise_sigma: float = 0.0
    base_price: float = 100.0
    dt_ms: int = 1000
    seed: int = 0
    return_scale: float = 1e-3
    symbol: str = "SYNTH"

    def __post_init__(self):
        if self.n_trades < 2:
            raise ParameterError("n_trades must be >= 2", module=MODULE)
        if not 0 < self.impact_beta < 1:
            raise ParameterError("impact_beta must lie in (0, 1)", module=MODULE)
        if self.noise_sigma < 0 or not self.base_price > 0 or self.dt_ms < 0 or not self.return_scale > 0:
            raise ParameterError("invalid market spec", module=MODULE)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["volume_law"] = {"kind": type(self.volume_law).__name__, **asdict(self.volume_law)}
        return d


@dataclass(frozen=True, eq=False)
class Market:
    series: TradeSeries
    log_returns: np.ndarray
    impact_c: float


def simulate(spec: MarketSpec) -> Market:
    """Generate the trade tape plus the per-trade log returns behind it.

    Trade 0 prints at ``base_price``; trade ``i >= 1`` moves the log price by
    ``s_i * c * V_i^beta * exp(noise_sigma * z_i)`` with a fair random sign.
    Volumes are the continuous draws of the volume law.
    """
    rng = np.random.default_rng(spec.seed)
    vol = spec.volume_law.draw(spec.n_trades, rng)
    signs = np.where(rng.random(spec.n_trades) < 0.5, -1.0, 1.0)
    noise = np.exp(spec.noise_sigma * rng.standard_normal(spec.n_trades)) if spec.noise_sigma > 0 else 1.0

    unit = signs * vol**spec.impact_beta * noise
    # trade 0 only sets the opening price
    c = spec.return_scale / unit[1:].std(ddof=1) if spec.n_trades > 2 else spec.return_scale / abs(unit[1])
    if not math.isfinite(c) or c <= 0:
        c = spec.return_scale
    steps = c * unit
    steps[0] = 0.0

    logp = math.log(spec.base_price) + np.cumsum(steps)
    with np.errstate(over="ignore", under="ignore"):
        prices = np.exp(logp)
    bad = ~np.isfinite(prices) | (prices <= 0) | ~np.isfinite(logp)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise GenerationError(f"price left the float range at trade {i}", index=i, module=MODULE)

    ts = np.arange(spec.n_trades, dtype=np.int64) * spec.dt_ms
    series = TradeSeries.from_arrays(spec.symbol, ts, prices, vol)
    steps.setflags(write=False)
    return Market(series, steps, float(c))


def gen_market(spec: MarketSpec) -> TradeSeries:
    return simulate(spec).series
