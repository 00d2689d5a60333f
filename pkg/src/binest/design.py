"""Fixed-precision sample sizes for the product-of-means estimator.

The requirement is ``c * sd(N_bar_k) <= gamma * N`` with ``c = 2`` by
default, i.e. ``c^2 q (Np + m + q/k) = N k m p gamma^2``.  Substituting
``xi = q / k`` gives the quadratic ``xi^2 + (Np + m) xi - N m p g^2 / 4 = 0``
with ``g = 2 gamma / c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from binest.distributions import ModelParams
from binest.errors import DegeneratePilotError, DomainError, ToleranceError

QUAD_TOL = 1e-6
SPAN_SD = 8.0
MIN_PILOT_FOR_ASYMPTOTICS = 30


@dataclass(frozen=True)
class PrecisionSpec:
    gamma: float
    alpha: float = 0.05

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    def multiplier(self, use_z: bool = False) -> float:
        """2 (the default criterion) or ``z_{1-alpha/2}``."""
        return float(special.ndtri(1.0 - self.alpha / 2.0)) if use_z else 2.0


@dataclass(frozen=True)
class SampleSizeResult:
    k_value: int
    xi: float
    k_exact: float
    residual: float


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")


def precision_residual(params: ModelParams, gamma: float, k: float, multiplier: float = 2.0) -> float:
    """Relative residual of ``c^2 q (Np + m + q/k) - N k m p gamma^2``."""
    n, p, m, q = params.n_true, params.p, params.m, params.q
    rhs = n * k * m * p * gamma**2
    return (multiplier**2 * q * (n * p + m + q / k) - rhs) / rhs


def k_oracle(params: ModelParams, gamma: float, multiplier: float = 2.0) -> SampleSizeResult:
    """Sample size needed when ``N`` and ``p`` are known; ``floor(k) + 1``."""
    _check_gamma(gamma)
    n, p, m = params.n_true, params.p, params.m
    g = 2.0 * gamma / multiplier
    a = n * p + m
    b = n * m * p * g**2
    u = b / a**2
    # sqrt(1 + u) - 1 written without cancellation
    xi = a * u / (math.sqrt(1.0 + u) + 1.0) / 2.0
    k = (1.0 - p) / xi
    return SampleSizeResult(
        k_value=math.floor(k) + 1,
        xi=xi,
        k_exact=k,
        residual=precision_residual(params, gamma, k, multiplier),
    )


def k_two_stage_exact(x_bar, t_bar, m: int, gamma: float, multiplier: float = 2.0):
    """Unfloored plug-in size ``A(t_bar - m) / B(x_bar)``; works elementwise on arrays."""
    _check_gamma(gamma)
    g = 2.0 * gamma / multiplier
    x_bar = np.asarray(x_bar, dtype=float)
    t_bar = np.asarray(t_bar, dtype=float)
    if np.any(x_bar <= 0):
        raise DegeneratePilotError("pilot mean of binomial counts is zero; N cannot be estimated")
    if np.any(t_bar < m):
        raise DomainError("mean Pascal waiting time cannot be below m")
    u = x_bar * m * g**2 / (x_bar + m) ** 2
    denom = t_bar * (x_bar + m) * u / (np.sqrt(1.0 + u) + 1.0)
    out = 2.0 * (t_bar - m) / denom
    return float(out) if out.ndim == 0 else out


def k_two_stage(x_bar: float, t_bar: float, m: int, gamma: float, multiplier: float = 2.0) -> int:
    """Plug-in second-stage size from pilot means: ``floor(A / B) + 1``."""
    return math.floor(k_two_stage_exact(x_bar, t_bar, m, gamma, multiplier)) + 1


def k_two_stage_array(x_bar, t_bar, m: int, gamma: float, multiplier: float = 2.0) -> np.ndarray:
    return np.floor(k_two_stage_exact(x_bar, t_bar, m, gamma, multiplier)).astype(np.int64) + 1


def _quad(f, lo, hi):
    value, err = integrate.quad(f, lo, hi, epsabs=1e-10, epsrel=1e-12, limit=200)
    if not np.isfinite(value) or err > QUAD_TOL:
        raise ToleranceError(f"quadrature error estimate {err:g} exceeds {QUAD_TOL:g}")
    return value


def _normal_moments_of_means(params: ModelParams, k: int):
    n, p, m, q = params.n_true, params.p, params.m, params.q
    mu_y, sd_y = m * q / p, math.sqrt(m * q / (p * p * k))
    mu_x, sd_x = n * p, math.sqrt(n * p * q / k)
    return mu_y, sd_y, mu_x, sd_x


def expected_k_two_stage(
    params: ModelParams, gamma: float, k1: int, multiplier: float = 2.0
) -> tuple[float, float]:
    """Asymptotic mean and std of the unfloored plug-in size after a pilot of ``k1``.

    ``K = A(Y_bar) / B(X_bar)`` with the two means independent and, for large
    ``k1``, normal.  ``E K = E A  E(1/B)`` and ``E K^2 = E A^2  E(1/B^2)``;
    each factor is integrated over ``+/- 8`` standard deviations.
    """
    _check_gamma(gamma)
    if k1 < MIN_PILOT_FOR_ASYMPTOTICS:
        raise DomainError(f"normal approximation needs k1 >= {MIN_PILOT_FOR_ASYMPTOTICS}, got {k1}")
    m = params.m
    g = 2.0 * gamma / multiplier
    mu_y, sd_y, mu_x, sd_x = _normal_moments_of_means(params, k1)
    if stats.norm.cdf(0.0, mu_x, sd_x) > 1e-12:
        raise DomainError("normal law of the binomial mean puts non-negligible mass at or below zero")

    def a(y):
        return 2.0 * y / (y + m)

    def b(x):
        u = x * m * g**2 / (x + m) ** 2
        return (x + m) * u / (math.sqrt(1.0 + u) + 1.0)

    y_lo, y_hi = mu_y - SPAN_SD * sd_y, mu_y + SPAN_SD * sd_y
    x_lo, x_hi = max(mu_x - SPAN_SD * sd_x, 1e-12), mu_x + SPAN_SD * sd_x
    fy = stats.norm(mu_y, sd_y).pdf
    fx = stats.norm(mu_x, sd_x).pdf

    ea = _quad(lambda y: a(y) * fy(y), y_lo, y_hi)
    ea2 = _quad(lambda y: a(y) ** 2 * fy(y), y_lo, y_hi)
    # 1/B is large (~K/A); scale to keep the absolute tolerance meaningful
    scale = b(mu_x)
    eb = _quad(lambda x: scale / b(x) * fx(x), x_lo, x_hi) / scale
    eb2 = _quad(lambda x: (scale / b(x)) ** 2 * fx(x), x_lo, x_hi) / scale**2
    mean = ea * eb
    var = ea2 * eb2 - mean**2
    return mean, math.sqrt(max(var, 0.0))


def coverage_two_stage(params: ModelParams, gamma: float, k_ts: int) -> float:
    """Normal-approximation probability that ``[(1-g) N_bar, (1+g) N_bar]`` covers ``N``.

    Conditioning on ``X_bar = x`` the event is
    ``Nm / ((1+g) x) - m <= Y_bar <= Nm / ((1-g) x) - m``; its normal
    probability is integrated against the density of ``X_bar``.
    """
    _check_gamma(gamma)
    if k_ts < 1:
        raise DomainError(f"k_ts must be positive, got {k_ts}")
    n, m = params.n_true, params.m
    mu_y, sd_y, mu_x, sd_x = _normal_moments_of_means(params, k_ts)
    fx = stats.norm(mu_x, sd_x).pdf

    def inner(x):
        lo = n * m / ((1.0 + gamma) * x) - m
        hi = n * m / ((1.0 - gamma) * x) - m
        return special.ndtr((hi - mu_y) / sd_y) - special.ndtr((lo - mu_y) / sd_y)

    x_lo, x_hi = max(mu_x - SPAN_SD * sd_x, 1e-12), mu_x + SPAN_SD * sd_x
    return min(_quad(lambda x: inner(x) * fx(x), x_lo, x_hi), 1.0)
