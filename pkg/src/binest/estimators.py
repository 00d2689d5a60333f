"""Point estimators of N and p from paired binomial / Pascal samples.

Two unbiased estimators are provided:

* mean of products  ``(1/k) sum X_i T_i / m``
* product of means  ``mean(X) mean(T) / m``

together with their exact variances, the CLT confidence interval built on
the mean-of-products estimator, and its conditional coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from binest.distributions import ModelParams, make_rng, sample_binomial, sample_pascal
from binest.errors import DomainError


class Method(str, Enum):
    MEAN_OF_PRODUCTS = "mean-of-products"
    PRODUCT_OF_MEANS = "product-of-means"


@dataclass(frozen=True)
class PairedSample:
    """Binomial counts ``xs`` and Pascal waiting times ``ts`` sharing the target ``m``."""

    xs: tuple
    ts: tuple
    m: int

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(int(x) for x in self.xs))
        object.__setattr__(self, "ts", tuple(int(t) for t in self.ts))
        if self.m < 1:
            raise DomainError(f"m must be positive, got {self.m}")
        if not self.xs or not self.ts:
            raise DomainError("both samples need at least one observation")
        if any(x < 0 for x in self.xs):
            raise DomainError("binomial counts must be non-negative")
        if any(t < self.m for t in self.ts):
            raise DomainError(f"Pascal waiting times must be >= m = {self.m}")

    @property
    def paired(self) -> bool:
        return len(self.xs) == len(self.ts)

    def nhats(self) -> np.ndarray:
        if not self.paired:
            raise DomainError("mean-of-products needs equal sample lengths")
        return np.asarray(self.xs, float) * np.asarray(self.ts, float) / self.m

    def p_hat(self) -> float:
        return self.m / float(np.mean(self.ts))


@dataclass(frozen=True)
class EstimateReport:
    n_hat: float
    p_hat: float
    k_final: int
    ci_low: float
    ci_high: float
    method: Method


def z_quantile(prob: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob}")
    return float(special.ndtri(prob))


def norm_cdf(x: float) -> float:
    return float(special.ndtr(x))


def nhat_single(x: int, t: int, m: int) -> float:
    if m < 1 or t < m:
        raise DomainError(f"need t >= m >= 1, got t={t}, m={m}")
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    return x * t / m


def estimate_mean_of_products(sample: PairedSample) -> float:
    return float(np.mean(sample.nhats()))


def estimate_product_of_means(sample: PairedSample) -> float:
    return float(np.mean(sample.xs)) * float(np.mean(sample.ts)) / sample.m


def var_mean_of_products(params: ModelParams, k: int) -> float:
    """``Var`` of the mean of ``k`` single-pair estimates: ``(Nq/(kmp)) (Np + m + q)``."""
    _check_k(k)
    n, p, m, q = params.n_true, params.p, params.m, params.q
    return n * q / (k * m * p) * (n * p + m + q)


def var_product_of_means(params: ModelParams, k1: int, k2: int) -> float:
    """``Var`` of ``mean(X) mean(T) / m`` with ``k1`` counts and ``k2`` waiting times."""
    _check_k(k1)
    _check_k(k2)
    n, p, m, q = params.n_true, params.p, params.m, params.q
    return n * q / (m * p) * (n * p / k2 + m / k1 + q / (k1 * k2))


def relative_efficiency(params: ModelParams, k: int) -> float:
    """Variance ratio product-of-means / mean-of-products at ``k1 = k2 = k``."""
    _check_k(k)
    n, p, m, q = params.n_true, params.p, params.m, params.q
    return (n * p + m + q / k) / (n * p + m + q)


def sample_variance_s2(nhats: Sequence[float]) -> float:
    values = np.asarray(nhats, dtype=float)
    if values.size < 2:
        raise DomainError("need at least two values for a sample variance")
    return float(np.var(values, ddof=1))


def clt_confidence_interval(nhat_bar: float, s2: float, k: int, alpha: float) -> tuple[float, float]:
    """``nhat_bar -/+ z_{1-alpha/2} sqrt(s2 / k)``."""
    _check_k(k)
    if s2 < 0:
        raise DomainError(f"s2 must be non-negative, got {s2}")
    half = z_quantile(1.0 - alpha / 2.0) * math.sqrt(s2 / k)
    return nhat_bar - half, nhat_bar + half


def conditional_coverage(s2: float, var_true: float, alpha: float) -> float:
    """Approximate coverage ``2 Phi(z_{1-alpha/2} S / D) - 1`` of the CLT interval given ``S^2 = s2``."""
    if s2 < 0 or var_true <= 0:
        raise DomainError("need s2 >= 0 and var_true > 0")
    z = z_quantile(1.0 - alpha / 2.0)
    return 2.0 * norm_cdf(z * math.sqrt(s2 / var_true)) - 1.0


def estimate(sample: PairedSample, alpha: float = 0.05, method: Method = Method.PRODUCT_OF_MEANS) -> EstimateReport:
    """Point estimate with a normal-theory interval.

    Mean-of-products uses ``S^2`` of the single-pair estimates (plug-in
    variance when ``k = 1``).  Product-of-means plugs ``(n_hat, p_hat)``
    into its exact variance.
    """
    method = Method(method)
    p_hat = sample.p_hat()
    if method is Method.MEAN_OF_PRODUCTS:
        n_hat = estimate_mean_of_products(sample)
        k = len(sample.xs)
        s2 = sample_variance_s2(sample.nhats()) if k >= 2 else _plugin_var(n_hat, p_hat, sample.m, 1, 1)
    else:
        n_hat = estimate_product_of_means(sample)
        k = max(len(sample.xs), len(sample.ts))
        # variance of the estimate itself; rescale so the CLT helper's 1/k applies
        s2 = k * _plugin_var(n_hat, p_hat, sample.m, len(sample.xs), len(sample.ts))
    lo, hi = clt_confidence_interval(n_hat, s2, k, alpha)
    return EstimateReport(n_hat=n_hat, p_hat=p_hat, k_final=k, ci_low=lo, ci_high=hi, method=method)


def _plugin_var(n_hat, p_hat, m, k1, k2):
    q = 1.0 - p_hat
    if n_hat <= 0 or q <= 0:
        return 0.0
    return n_hat * q / (m * p_hat) * (n_hat * p_hat / k2 + m / k1 + q / (k1 * k2))


def _check_k(k):
    if int(k) != k or k < 1:
        raise DomainError(f"sample size must be a positive integer, got {k}")


@dataclass(frozen=True)
class CoverageResult:
    empirical: float
    mean_conditional: float
    replicas: int


def coverage_experiment(
    params: ModelParams,
    k: int,
    alpha: float,
    replicas: int,
    seed: int,
    split: bool = True,
) -> CoverageResult:
    """Monte Carlo coverage of the CLT interval for the mean-of-products estimator.

    With ``split=True`` every replica draws ``2k`` single-pair estimates: the
    first ``k`` give the centre and the other ``k`` give ``S^2``, making the
    two independent.  ``split=False`` uses one sample of ``k`` for both.
    The mean of the conditional coverages ``CP_k(S^2)`` is returned alongside
    the empirical hit rate.
    """
    if k < 2:
        raise DomainError("k must be at least 2")
    var_true = var_mean_of_products(params, 1)
    z = z_quantile(1.0 - alpha / 2.0)
    hits = 0
    cond = np.empty(replicas)
    for r in range(replicas):
        rng = make_rng(seed, r)
        draws = 2 * k if split else k
        xs = sample_binomial(rng, params.n_true, params.p, size=draws)
        ts = sample_pascal(rng, params.m, params.p, size=draws)
        nh = xs * ts / params.m
        centre = float(nh[:k].mean())
        s2 = float(np.var(nh[k:] if split else nh, ddof=1))
        half = z * math.sqrt(s2 / k)
        hits += abs(centre - params.n_true) <= half
        cond[r] = 2.0 * norm_cdf(z * math.sqrt(s2 / var_true)) - 1.0
    return CoverageResult(empirical=hits / replicas, mean_conditional=float(cond.mean()), replicas=replicas)
