import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from binest.distributions import (
    ModelParams,
    binom_pmf,
    make_rng,
    negbin_tail,
    pascal_pmf,
    sample_binomial,
    sample_pascal,
)
from binest.errors import DomainError
from binest.estimators import (
    EstimateReport,
    Method,
    PairedSample,
    clt_confidence_interval,
    conditional_coverage,
    coverage_experiment,
    estimate,
    estimate_mean_of_products,
    estimate_product_of_means,
    nhat_single,
    relative_efficiency,
    sample_variance_s2,
    var_mean_of_products,
    var_product_of_means,
    z_quantile,
)

TABLE3 = [
    (10, 10, 0.99884),
    (10, 20, 0.99878),
    (10, 50, 0.99874),
    (10, 100, 0.99872),
    (10, 1000, 0.99871),
    (50, 10, 0.99897),
    (50, 20, 0.99892),
    (50, 50, 0.99888),
    (50, 100, 0.99887),
    (50, 1000, 0.99886),
]


def test_nhat_single():
    assert nhat_single(3580, 25, 10) == 8950
    assert nhat_single(0, 17, 4) == 0
    assert nhat_single(42, 7, 7) == 42
    with pytest.raises(DomainError):
        nhat_single(3, 5, 10)


def test_paired_sample_validation():
    with pytest.raises(DomainError):
        PairedSample([1], [1], 2)
    with pytest.raises(DomainError):
        PairedSample([], [3], 2)
    with pytest.raises(DomainError):
        PairedSample([-1], [3], 2)


def test_hand_arithmetic():
    s = PairedSample([2, 4], [5, 5], 2)
    assert estimate_mean_of_products(s) == 7.5
    assert estimate_product_of_means(s) == 7.5
    one = PairedSample([13], [9], 3)
    assert estimate_mean_of_products(one) == nhat_single(13, 9, 3)
    assert estimate_product_of_means(one) == nhat_single(13, 9, 3)


def test_unpaired_product_of_means():
    s = PairedSample([1, 2, 3], [4, 6], 2)
    assert estimate_product_of_means(s) == pytest.approx(2 * 5 / 2)
    with pytest.raises(DomainError):
        estimate_mean_of_products(s)


def test_variance_formulas():
    p = ModelParams(100, 0.6, 10)
    assert var_mean_of_products(p, 1) == pytest.approx(469.333, abs=5e-4)
    assert var_mean_of_products(ModelParams(500, 0.6, 10), 1) == pytest.approx(101.719**2, rel=1e-5)
    assert var_mean_of_products(p, 8) == pytest.approx(var_mean_of_products(p, 1) / 8, rel=1e-14)
    assert var_product_of_means(p, 1, 1) == pytest.approx(var_mean_of_products(p, 1), rel=1e-14)
    n, pp, m, q, k = 100, 0.6, 10, 0.4, 7
    assert var_product_of_means(p, k, k) == pytest.approx(
        n * q / (m * pp * k) * (n * pp + m + q / k), rel=1e-14
    )


@pytest.mark.parametrize("m, k, expected", TABLE3)
def test_relative_efficiency_table3(m, k, expected):
    assert relative_efficiency(ModelParams(500, 0.6, m), k) == pytest.approx(expected, abs=1e-5)


@given(
    n=st.integers(1, 5000),
    p=st.floats(0.01, 0.99),
    m=st.integers(1, 60),
    k=st.integers(2, 10_000),
)
def test_product_of_means_more_efficient(n, p, m, k):
    params = ModelParams(n, p, m)
    assert var_product_of_means(params, k, k) < var_mean_of_products(params, k)
    re = relative_efficiency(params, k)
    assert re < 1
    assert relative_efficiency(params, k + 1) <= re
    assert relative_efficiency(params, 1) == 1.0
    limit = (n * p + m) / (n * p + m + (1 - p))
    assert re >= limit


def test_relative_efficiency_limit():
    params = ModelParams(500, 0.6, 10)
    limit = (300 + 10) / (300 + 10 + 0.4)
    assert relative_efficiency(params, 10**13) == pytest.approx(limit, abs=1e-12)


def test_sample_variance():
    assert sample_variance_s2([4.2] * 5) == 0
    assert sample_variance_s2([1, 3]) == 2
    with pytest.raises(DomainError):
        sample_variance_s2([1.0])


def test_clt_interval():
    assert clt_confidence_interval(50.0, 0.0, 10, 0.05) == (50.0, 50.0)
    lo, hi = clt_confidence_interval(100.0, 469.333, 100, 0.05)
    half = 1.959963984540054 * math.sqrt(4.69333)
    assert lo == pytest.approx(100 - half, abs=1e-9)
    assert hi == pytest.approx(100 + half, abs=1e-9)
    assert half == pytest.approx(1.959964 * 2.16641, abs=1e-5)


def test_z_quantile_accuracy():
    assert z_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert z_quantile(0.5) == 0.0
    with pytest.raises(DomainError):
        z_quantile(1.0)


def test_conditional_coverage():
    assert conditional_coverage(436.5608, 469.333, 0.05) == pytest.approx(0.9413, abs=2e-4)
    assert conditional_coverage(469.333, 469.333, 0.05) == pytest.approx(0.95, abs=1e-12)
    assert conditional_coverage(0.0, 469.333, 0.05) == 0.0


def _pascal_support(m, p):
    """Pascal support truncated where the neglected tail (and its first moment) is below 1e-17."""
    upto = m
    while negbin_tail(upto - m, m, p) * (upto + 50) > 1e-17:
        upto += 10
    ts = np.arange(m, upto + 1, dtype=float)
    return ts, np.array([pascal_pmf(int(t), m, p) for t in ts])


@pytest.mark.parametrize("n, m, p", [(1, 1, 0.5), (3, 2, 0.3), (5, 2, 0.7), (4, 1, 0.4)])
def test_estimators_unbiased_by_enumeration_k2(n, m, p):
    ts, wt = _pascal_support(m, p)
    mop = pom = 0.0
    for x1, x2 in itertools.product(range(n + 1), repeat=2):
        wx = binom_pmf(x1, n, p) * binom_pmf(x2, n, p)
        t1 = ts[:, None]
        t2 = ts[None, :]
        w = wx * wt[:, None] * wt[None, :]
        mop += float(np.sum(w * (x1 * t1 + x2 * t2) / (2 * m)))
        pom += float(np.sum(w * ((x1 + x2) / 2) * ((t1 + t2) / 2) / m))
    assert mop == pytest.approx(n, abs=1e-9)
    assert pom == pytest.approx(n, abs=1e-9)


def _replica_means(params, k, replicas, seed):
    """Product-of-means and mean-of-products over replicas of k pairs."""
    rng = make_rng(seed)
    x = sample_binomial(rng, params.n_true, params.p, size=(replicas, k))
    t = sample_pascal(rng, params.m, params.p, size=(replicas, k))
    pom = x.mean(axis=1) * t.mean(axis=1) / params.m
    mop = (x * t).mean(axis=1) / params.m
    return pom, mop


def test_mean_of_products_unbiased_monte_carlo():
    params = ModelParams(100, 0.4, 10)
    _, mop = _replica_means(params, 20, 10**5, seed=8)
    se = math.sqrt(var_mean_of_products(params, 20) / mop.size)
    assert abs(mop.mean() - 100) < 4 * se


def test_product_of_means_unbiased_monte_carlo():
    params = ModelParams(500, 0.6, 10)
    pom, _ = _replica_means(params, 10, 10**5, seed=9)
    se = math.sqrt(var_product_of_means(params, 10, 10) / pom.size)
    assert abs(pom.mean() - 500) < 4 * se


def test_variance_formulas_monte_carlo():
    params = ModelParams(500, 0.6, 10)
    k = 10
    chunks = [_replica_means(params, k, 10**5, seed=100 + i) for i in range(10)]
    pom = np.concatenate([c[0] for c in chunks])
    mop = np.concatenate([c[1] for c in chunks])
    for draws, expected in ((pom, var_product_of_means(params, k, k)), (mop, var_mean_of_products(params, k))):
        dev2 = (draws - 500.0) ** 2
        se = dev2.std() / math.sqrt(draws.size)
        assert abs(dev2.mean() - expected) < 5 * se


def test_s2_unbiased_monte_carlo():
    params = ModelParams(100, 0.6, 10)
    rng = make_rng(77)
    k = 10
    reps = 10**5
    x = sample_binomial(rng, 100, 0.6, size=(reps, k))
    t = sample_pascal(rng, 10, 0.6, size=(reps, k))
    s2 = np.var(x * t / 10, axis=1, ddof=1)
    se = s2.std() / math.sqrt(reps)
    assert abs(s2.mean() - 469.333) < 5 * se


def test_estimate_report():
    s = PairedSample([300, 310, 290, 305], [17, 16, 18, 15], 10)
    rep = estimate(s, 0.05, Method.MEAN_OF_PRODUCTS)
    assert isinstance(rep, EstimateReport)
    assert rep.ci_low <= rep.n_hat <= rep.ci_high
    assert rep.p_hat == pytest.approx(10 / np.mean(s.ts))
    assert rep.k_final == 4
    rep2 = estimate(s, 0.05, "product-of-means")
    assert rep2.method is Method.PRODUCT_OF_MEANS
    assert rep2.ci_low <= rep2.n_hat <= rep2.ci_high
    single = estimate(PairedSample([5], [10], 10), 0.05, Method.MEAN_OF_PRODUCTS)
    assert single.p_hat == 1.0 and single.ci_low == single.ci_high == 5.0


def test_clt_coverage_and_conditional_coverage():
    params = ModelParams(100, 0.6, 10)
    res = coverage_experiment(params, k=400, alpha=0.05, replicas=10**4, seed=4242)
    assert 0.935 <= res.empirical <= 0.965
    assert abs(res.mean_conditional - res.empirical) < 0.01


def test_coverage_experiment_without_split():
    res = coverage_experiment(ModelParams(100, 0.6, 10), k=50, alpha=0.1, replicas=200, seed=1, split=False)
    assert 0.8 < res.empirical < 0.97
    with pytest.raises(DomainError):
        coverage_experiment(ModelParams(100, 0.6, 10), k=1, alpha=0.1, replicas=2, seed=1)
