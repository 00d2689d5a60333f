"""Exact law and closed-form moments of the single-pair estimator ``N_hat = X T / m``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from binest.distributions import (
    ModelParams,
    binom_pmf_vector,
    negbin_survival_table,
    negbin_tail,
)
from binest.errors import DomainError


@dataclass(frozen=True)
class NhatMoments:
    mean: float
    second_moment: float
    third_moment: float
    variance: float
    std: float
    skewness: float


def nhat_survival(xi: float, params: ModelParams, method: str = "table") -> float:
    """``P(N_hat > xi)`` for real ``xi >= 0``.

    Conditions on the binomial count: given ``X = x >= 1``,
    ``N_hat > xi`` iff ``Y = T - m > m (xi / x - 1)``.  ``X = 0`` gives
    ``N_hat = 0`` and never contributes.

    ``method`` picks how the negative-binomial tails are evaluated:
    ``"table"`` (cached backward-summed survival table, vectorised),
    ``"direct"`` (term-by-term upper-tail sums per ``x``) or ``"beta"``
    (regularized incomplete beta).
    """
    if xi < 0:
        raise DomainError(f"xi must be non-negative, got {xi}")
    n, p, m = params.n_true, params.p, params.m
    b = binom_pmf_vector(n, p)
    if method == "table":
        return _survival_from_table(xi, n, p, m, b)
    terms = []
    exact_xi = Fraction(xi)
    for x in range(1, n + 1):
        bx = float(b[x])
        if bx == 0.0:
            continue
        # exact rational threshold so lattice points are not misrounded
        terms.append(bx * negbin_tail(m * (exact_xi / x - 1), m, p, method=method))
    return min(math.fsum(terms), 1.0)


def _survival_from_table(xi, n, p, m, b):
    surv = negbin_survival_table(m, p)
    x = np.arange(1, n + 1)
    scaled = xi * m
    if float(scaled).is_integer():
        # T > xi m / x  <=>  T >= floor(xi m / x) + 1, in integers
        j0 = int(scaled) // x + 1 - m
    else:
        j0 = np.floor(m * (xi / x - 1.0)).astype(np.int64) + 1
    j0 = np.clip(j0, 0, surv.size - 1)
    return min(math.fsum(b[1:] * surv[j0]), 1.0)


def nhat_interval_prob(n: int, params: ModelParams) -> float:
    """``P(n < N_hat <= n + 1)``."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a non-negative integer, got {n}")
    return max(0.0, nhat_survival(n, params) - nhat_survival(n + 1, params))


def _first_integer_below_half(params: ModelParams) -> int:
    """Smallest integer ``n`` with ``P(N_hat > n) <= 1/2`` (bisection on a monotone function)."""
    lo, hi = 0, max(1, params.n_true)
    while nhat_survival(hi, params) > 0.5:
        lo, hi = hi, 2 * hi
    if nhat_survival(lo, params) <= 0.5:
        return lo
    # invariant: S(lo) > 0.5 >= S(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if nhat_survival(mid, params) > 0.5:
            lo = mid
        else:
            hi = mid
    return hi


def nhat_median(params: ModelParams) -> int:
    """Integer part of the median ``inf{xi : P(N_hat > xi) <= 1/2}``.

    With ``n`` the first integer where the survival drops to 1/2, the median
    lies in ``(n - 1, n]``.  ``N_hat`` lives on the lattice of multiples of
    ``1/m``, so it equals ``n`` exactly iff ``P(N_hat >= n) > 1/2``, which is
    the survival evaluated half a lattice step below ``n``.
    """
    n = _first_integer_below_half(params)
    if n == 0:
        return 0
    if nhat_survival(n - 0.5 / params.m, params) > 0.5:
        return n
    return n - 1


def binomial_raw_moments(n: int, p: float) -> tuple[float, float, float]:
    """``E X, E X^2, E X^3`` for ``X ~ B(n, p)`` (factorial-moment expansion)."""
    m1 = n * p
    m2 = n * (n - 1) * p**2 + n * p
    m3 = n * (n - 1) * (n - 2) * p**3 + 3 * n * (n - 1) * p**2 + n * p
    return m1, m2, m3


def pascal_raw_moments(m: int, p: float) -> tuple[float, float, float]:
    """``E T, E T^2, E T^3`` for ``T ~ Pasc(m, p)`` from its cumulants.

    ``T`` is a sum of ``m`` geometric variables whose first three cumulants
    are ``1/p``, ``q/p^2`` and ``q(1+q)/p^3``.
    """
    q = 1.0 - p
    k1 = m / p
    k2 = m * q / p**2
    k3 = m * q * (1 + q) / p**3
    return k1, k2 + k1**2, k3 + 3 * k2 * k1 + k1**3


def nhat_moments(params: ModelParams) -> NhatMoments:
    n, p, m = params.n_true, params.p, params.m
    q = 1.0 - p
    second = n * (n * p - p + 1) * (m - p + 1) / (m * p)
    third = (
        (n * (n - 1) * (n - 2) * p**3 + 3 * n * (n - 1) * p**2 + n * p)
        * (m**2 - 3 * m * p + 3 * m + p**2 - 3 * p + 2)
        / (m**2 * p**3)
    )
    var = n * q * (n * p + q + m) / (p * m)
    skew = (third - n**3 - 3 * n * var) / var**1.5
    return NhatMoments(
        mean=float(n),
        second_moment=second,
        third_moment=third,
        variance=var,
        std=math.sqrt(var),
        skewness=skew,
    )


def nhat_moments_by_factorisation(params: ModelParams) -> tuple[float, float, float]:
    """Raw moments ``E N_hat^r = E X^r E T^r / m^r`` for r = 1, 2, 3."""
    bx = binomial_raw_moments(params.n_true, params.p)
    pt = pascal_raw_moments(params.m, params.p)
    return tuple(bx[r] * pt[r] / params.m ** (r + 1) for r in range(3))
