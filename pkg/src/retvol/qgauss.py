"""q-Gaussian distributions: density, distribution function, sampling, fitting.

The density is ``C * exp_q(-B (x - mu)^2)`` with ``B = 1 / ((3 - q) sigma^2)``.
For ``1 < q < 3`` its tails decay as ``P(X > x) ~ x^-alpha`` with
``alpha = (3 - q) / (q - 1)``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    DomainError,
    FitFailureError,
    InsufficientDataError,
    InsufficientRangeError,
    NumericsError,
    ParameterError,
)
from .tails import Ccdf

MODULE = "qgauss"

Q_FIT_BOUNDS = (1.0 + 1e-4, 3.0 - 1e-3)
MIN_FIT_SAMPLES = 1000
MIN_FIT_DECADES = 2.0
NORM_TOL = 1e-8


def q_exp(x, q: float):
    """``[1 + (1 - q) x]^(1 / (1 - q))``; 0 where the bracket is negative (q < 1).

    For q > 1 a nonpositive bracket is a pole and evaluates to ``inf``.
    """
    x = np.asarray(x, dtype=np.float64)
    if q == 1:
        out = np.exp(x)
    else:
        base = 1.0 + (1.0 - q) * x
        with np.errstate(divide="ignore", invalid="ignore"):
            if q < 1:
                out = np.where(base > 0, np.abs(base) ** (1.0 / (1.0 - q)), 0.0)
            else:
                out = np.where(base > 0, np.abs(base) ** (1.0 / (1.0 - q)), np.inf)
    return out[()] if out.ndim == 0 else out


def q_log(x, q: float):
    """Inverse of :func:`q_exp`: ``(x^(1 - q) - 1) / (1 - q)``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.log(x) if q == 1 else (x ** (1.0 - q) - 1.0) / (1.0 - q)
    return out[()] if out.ndim == 0 else out


def tail_exponent(q: float) -> float:
    if not 1 < q < 3:
        raise DomainError(f"tail exponent defined for 1 < q < 3, got q={q}", module=MODULE)
    return (3.0 - q) / (q - 1.0)


def q_from_alpha(alpha: float) -> float:
    if not alpha > 0:
        raise DomainError("alpha must be positive", module=MODULE)
    return (3.0 + alpha) / (1.0 + alpha)


def _log_norm_closed(q: float) -> float:
    """log of C_q, where the unit-B density is exp_q(-x^2) / C_q."""
    if q == 1:
        return 0.5 * math.log(math.pi)
    if q < 1:
        return (math.log(2.0) + 0.5 * math.log(math.pi) - math.log(3.0 - q) - 0.5 * math.log(1.0 - q)
                + special.gammaln(1.0 / (1.0 - q)) - special.gammaln((3.0 - q) / (2.0 * (1.0 - q))))
    return (0.5 * math.log(math.pi) - 0.5 * math.log(q - 1.0)
            + special.gammaln((3.0 - q) / (2.0 * (q - 1.0))) - special.gammaln(1.0 / (q - 1.0)))


def _norm_quad(q: float) -> float:
    f = lambda t: float(q_exp(-t * t, q))
    if q < 1:
        val, _ = integrate.quad(f, 0.0, 1.0 / math.sqrt(1.0 - q), epsabs=0, epsrel=1e-12, limit=200)
    else:
        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return 2.0 * val


@functools.lru_cache(maxsize=256)
def normalization_constant(q: float) -> float:
    """C_q for unit B, from the gamma-function expression.

    Falls back to quadrature if the closed form is not finite, and
    cross-checks the two at moderate q.
    """
    if not 0 < q < 3:
        raise DomainError(f"q-Gaussians are defined for 0 < q < 3, got q={q}", module=MODULE)
    closed = math.exp(_log_norm_closed(q))
    if not math.isfinite(closed):
        return _norm_quad(q)
    # quadrature degrades near q=3 where the integrand decays as t^-2/(q-1)
    if 0.05 <= q <= 2.6 and abs(q - 1) > 1e-3:
        quad = _norm_quad(q)
        if abs(quad - closed) > NORM_TOL * closed:
            raise NumericsError(
                f"normalization mismatch at q={q}: closed {closed!r} vs quadrature {quad!r}",
                {"q": q, "closed": closed, "quadrature": quad},
                module=MODULE,
            )
    return closed


@dataclass(frozen=True)
class QGaussianParams:
    q: float
    mu_q: float
    sigma_q: float

    def __post_init__(self):
        if not 1 < self.q < 3:
            raise DomainError(f"q must lie in (1, 3), got {self.q}", module=MODULE)
        if not self.sigma_q > 0:
            raise DomainError("sigma_q must be positive", module=MODULE)

    @property
    def B_q(self) -> float:
        return 1.0 / ((3.0 - self.q) * self.sigma_q**2)

    @property
    def alpha_qG(self) -> float:
        return (3.0 - self.q) / (self.q - 1.0)

    @property
    def dof(self) -> float:
        """Equivalent Student-t degrees of freedom (same value as alpha_qG)."""
        return self.alpha_qG

    def to_dict(self) -> dict:
        return {"q": self.q, "mu_q": self.mu_q, "sigma_q": self.sigma_q,
                "B_q": self.B_q, "alpha_qG": self.alpha_qG}


def density(x, q: float, mu: float = 0.0, sigma: float = 1.0):
    """q-Gaussian density for any 0 < q < 3."""
    if not 0 < q < 3:
        raise DomainError(f"q-Gaussians are defined for 0 < q < 3, got q={q}", module=MODULE)
    if not sigma > 0:
        raise DomainError("sigma must be positive", module=MODULE)
    B = 1.0 / ((3.0 - q) * sigma**2)
    x = np.asarray(x, dtype=np.float64)
    out = math.sqrt(B) / normalization_constant(q) * q_exp(-B * (x - mu) ** 2, q)
    return out


def pdf(p: QGaussianParams, x):
    return density(x, p.q, p.mu_q, p.sigma_q)


def _quad(f, a, b, p: QGaussianParams, x: float, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            # relative tolerance only, so far tails keep their significant digits
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-10, limit=500, **kw)
        except integrate.IntegrationWarning as w:
            raise NumericsError(f"quadrature did not converge at x={x}: {w}",
                                {"x": x, **p.to_dict()}, module=MODULE) from None
    return val


def _tail_integral(p: QGaussianParams, a: float) -> float:
    """P(X > a) for a >= mu by adaptive quadrature of the density.

    Beyond ``mu + sigma`` the substitution ``t = mu + 1/s`` maps the tail onto
    ``[0, 1/(t - mu)]`` where the integrand is ``s^(alpha - 1)`` times a smooth
    factor; the power is handled exactly as a quadrature weight.
    """
    q, B = p.q, p.B_q
    b = max(a, p.mu_q + p.sigma_q)
    head = _quad(lambda t: float(pdf(p, t)), a, b, p, a) if b > a else 0.0
    k = math.sqrt(B) / normalization_constant(q)
    g = lambda s: k * (s * s + (q - 1.0) * B) ** (-1.0 / (q - 1.0))
    tail = _quad(g, 0.0, 1.0 / (b - p.mu_q), p, a, weight="alg", wvar=(p.alpha_qG - 1.0, 0.0))
    return head + tail


def sf(p: QGaussianParams, x: float) -> float:
    """Survival function ``1 - cdf`` by adaptive quadrature, accurate far into the tail."""
    x = float(x)
    if x == np.inf:
        return 0.0
    if x == -np.inf:
        return 1.0
    if x >= p.mu_q:
        return _tail_integral(p, x)
    return 1.0 - _tail_integral(p, 2 * p.mu_q - x)


def cdf(p: QGaussianParams, x: float) -> float:
    """Distribution function by adaptive quadrature of the density."""
    x = float(x)
    if x == np.inf:
        return 1.0
    if x == -np.inf:
        return 0.0
    if x <= p.mu_q:
        return _tail_integral(p, 2 * p.mu_q - x)
    return 1.0 - _tail_integral(p, x)


def sf_closed(x, q: float, mu: float, sigma: float) -> np.ndarray:
    """Vectorized survival function via the regularized incomplete beta function.

    For 1 < q < 3 the q-Gaussian is a location-scale Student-t with
    ``(3 - q) / (q - 1)`` degrees of freedom and scale ``sigma``.
    """
    nu = (3.0 - q) / (q - 1.0)
    z = (np.asarray(x, dtype=np.float64) - mu) / sigma
    t = nu / (nu + z * z)
    half = 0.5 * special.betainc(0.5 * nu, 0.5, t)
    return np.where(z >= 0, half, 1.0 - half)


def sample(p: QGaussianParams, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw ``n`` values with the generalized Box-Muller transform."""
    if n < 1:
        raise ParameterError("n must be >= 1", module=MODULE)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    qp = (1.0 + p.q) / (3.0 - p.q)
    u1 = 1.0 - rng.random(n)  # (0, 1]
    u2 = rng.random(n)
    z = np.sqrt(-2.0 * q_log(u1, qp)) * np.cos(2.0 * np.pi * u2)
    return p.mu_q + p.sigma_q * z


@dataclass(frozen=True)
class QGaussianFit:
    params: QGaussianParams
    objective: float
    n_points: int
    converged: bool
    at_bound: bool = False
    symmetric: bool = False
    iterations: int = 0
    max_tail_deviation: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "q": self.params.q,
            "mu_q": self.params.mu_q,
            "sigma_q": self.params.sigma_q,
            "alpha_qG": self.params.alpha_qG,
            "objective": self.objective,
            "n_points": self.n_points,
            "converged": self.converged,
            "at_bound": self.at_bound,
            "symmetric": self.symmetric,
            "max_tail_deviation": self.max_tail_deviation,
        }


def _start_moments(c: Ccdf) -> tuple[float, float, float, float]:
    """Median, mean, std and second moment of the distribution described by a CCDF."""
    xs, ps = c.xs, c.ps
    mass = np.r_[1.0 - ps[0], -np.diff(ps)]
    mass[-1] += ps[-1]
    mean = float(mass @ xs)
    var = float(mass @ (xs - mean) ** 2)
    med = float(xs[np.searchsorted(-ps, -0.5)]) if ps[-1] <= 0.5 else float(xs[-1])
    return med, mean, math.sqrt(max(var, 0.0)), float(mass @ xs**2)


def fit_ccdf(
    c: Ccdf,
    symmetric_about_zero: bool = False,
    q0: float = 1.5,
    sigma0: float | None = None,
    max_iter: int = 4000,
    tol: float = 1e-8,
) -> QGaussianFit:
    """Least-squares fit of a q-Gaussian to an empirical CCDF in log space.

    Minimizes ``sum (log p_emp - log P_model(X > x))^2`` over the CCDF points
    with Nelder-Mead.  With ``symmetric_about_zero`` the data are taken to be
    absolute values of a sample centred at zero, so ``mu_q = 0`` and the model
    is ``2 * P(X > x)``; otherwise ``mu_q`` is free.
    """
    if c.n < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"CCDF built from {c.n} samples, need {MIN_FIT_SAMPLES}", module=MODULE)
    if c.xs[-1] < 10**MIN_FIT_DECADES * c.xs[0]:
        raise InsufficientRangeError(
            f"CCDF spans {c.xs[-1] / c.xs[0]:.3g}x, need {MIN_FIT_DECADES:g} decades", module=MODULE
        )
    xs, logp = c.xs, np.log(c.ps)
    med, mean, std, m2 = _start_moments(c)
    qlo, qhi = Q_FIT_BOUNDS

    if symmetric_about_zero:
        s0 = sigma0 if sigma0 is not None else math.sqrt(m2)
        x0 = [q0, math.log(s0)]

        def unpack(v):
            return float(np.clip(v[0], qlo, qhi)), 0.0, math.exp(v[1])

        def model(q, mu, s):
            return np.log(2.0 * sf_closed(xs, q, 0.0, s))
    else:
        s0 = sigma0 if sigma0 is not None else std
        x0 = [q0, med, math.log(s0)]

        def unpack(v):
            return float(np.clip(v[0], qlo, qhi)), float(v[1]), math.exp(v[2])

        def model(q, mu, s):
            return np.log(sf_closed(xs, q, mu, s))

    def objective(v):
        q, mu, s = unpack(v)
        with np.errstate(divide="ignore"):
            resid = logp - model(q, mu, s)
        val = float(resid @ resid)
        return val if math.isfinite(val) else 1e300

    bounds = [(qlo, qhi)] + [(None, None)] * (len(x0) - 1)
    res = optimize.minimize(
        objective, x0, method="Nelder-Mead", bounds=bounds,
        options={"xatol": tol, "fatol": tol, "maxiter": max_iter, "maxfev": 2 * max_iter},
    )
    q, mu, s = unpack(res.x)
    params = QGaussianParams(q, mu, s)
    with np.errstate(divide="ignore"):
        dev = np.abs(logp - model(q, mu, s))
    n_tail = max(1, math.ceil(0.01 * len(c)))
    fit = QGaussianFit(
        params,
        float(res.fun),
        len(c),
        bool(res.success),
        at_bound=bool(q - qlo < 1e-3 or qhi - q < 1e-3),
        symmetric=symmetric_about_zero,
        iterations=int(res.nit),
        max_tail_deviation=float(dev[-n_tail:].max()),
    )
    if not res.success:
        raise FitFailureError(f"q-Gaussian fit did not converge: {res.message}", best=fit, module=MODULE)
    return fit
