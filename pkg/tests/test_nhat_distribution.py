import math

import numpy as np
import pytest

from binest.distributions import ModelParams, binom_pmf, make_rng, pascal_pmf, sample_binomial, sample_pascal
from binest.errors import DomainError
from binest.nhat_distribution import (
    nhat_interval_prob,
    nhat_median,
    nhat_moments,
    nhat_moments_by_factorisation,
    nhat_survival,
)

TABLE1 = ModelParams(300, 0.4, 10)
TABLE1_VALUES = {
    100: 0.9999,
    150: 0.9954,
    200: 0.9263,
    250: 0.7212,
    300: 0.4500,
    350: 0.2350,
    400: 0.1022,
    450: 0.0401,
    500: 0.0141,
}
TABLE2 = [
    (500, 0.6, 10, 101.719, 0.7057),
    (500, 0.6, 20, 73.075, 0.5012),
    (500, 0.6, 30, 60.590, 0.4105),
    (500, 0.6, 40, 53.260, 0.3562),
    (500, 0.3, 10, 136.925, 0.6837),
    (500, 0.3, 20, 99.787, 0.5045),
    (500, 0.3, 30, 83.829, 0.4260),
    (500, 0.3, 40, 74.579, 0.3789),
]


@pytest.mark.parametrize("n, expected", sorted(TABLE1_VALUES.items()))
def test_survival_table1(n, expected):
    assert nhat_survival(n, TABLE1) == pytest.approx(expected, abs=5e-4)


@pytest.mark.parametrize("xi", [0, 37.5, 100, 290.95, 300, 433.3, 500, 1200])
def test_survival_routes_agree(xi):
    table = nhat_survival(xi, TABLE1)
    assert table == pytest.approx(nhat_survival(xi, TABLE1, method="direct"), abs=1e-10)
    assert table == pytest.approx(nhat_survival(xi, TABLE1, method="beta"), abs=1e-10)


def test_survival_at_zero():
    assert nhat_survival(0, TABLE1) == pytest.approx(1 - 0.6**300, abs=1e-15)
    assert nhat_survival(0, ModelParams(3, 0.5, 2)) == pytest.approx(1 - 0.5**3, abs=1e-15)


def test_survival_rejects_negative():
    with pytest.raises(DomainError):
        nhat_survival(-0.1, TABLE1)


def test_survival_nonincreasing():
    grid = np.linspace(0, 800, 1601)
    values = [nhat_survival(x, TABLE1) for x in grid]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_survival_is_right_continuous_step_on_lattice():
    # N_hat takes values in multiples of 1/m: nothing happens strictly between lattice points
    p = ModelParams(20, 0.5, 4)
    assert nhat_survival(5.01, p) == nhat_survival(5.24, p)
    assert nhat_survival(5.25, p) <= nhat_survival(5.24, p)


def test_median_table1():
    assert nhat_median(TABLE1) == 291


def test_median_degenerate():
    assert nhat_median(ModelParams(1, 1 - 1e-12, 1)) == 1


def test_median_against_lattice_scan():
    params = ModelParams(100, 0.6, 10)
    m = params.m
    # the median inf{xi: S(xi) <= 1/2} is attained on the lattice j/m
    j = 0
    while nhat_survival(j / m, params, method="beta") > 0.5:
        j += 1
    assert nhat_median(params) == math.floor(j / m)


def test_interval_prob_nonnegative_and_definition():
    v = nhat_interval_prob(299, TABLE1)
    assert v >= 0
    assert v == pytest.approx(nhat_survival(299, TABLE1) - nhat_survival(300, TABLE1), abs=1e-15)
    assert nhat_interval_prob(10**6, TABLE1) == pytest.approx(0.0, abs=1e-300)


def test_interval_probs_telescope():
    total = math.fsum(nhat_interval_prob(n, TABLE1) for n in range(5001))
    assert total == pytest.approx(nhat_survival(0, TABLE1), abs=1e-8)


# -- moments ----------------------------------------------------------------


@pytest.mark.parametrize("n, p, m, std, skew", TABLE2)
def test_moments_table2(n, p, m, std, skew):
    mo = nhat_moments(ModelParams(n, p, m))
    assert mo.std == pytest.approx(std, abs=1e-3)
    assert mo.skewness == pytest.approx(skew, abs=1e-4)
    assert mo.mean == n
    assert mo.std == pytest.approx(math.sqrt(mo.variance), rel=1e-15)


def test_variance_worked_example():
    assert nhat_moments(ModelParams(100, 0.6, 10)).variance == pytest.approx(469.333, abs=5e-4)


@pytest.mark.parametrize("n, p, m", [(r[0], r[1], r[2]) for r in TABLE2] + [(7, 0.2, 1), (1, 0.9, 3)])
def test_closed_form_moments_match_factorised_moments(n, p, m):
    params = ModelParams(n, p, m)
    mo = nhat_moments(params)
    r1, r2, r3 = nhat_moments_by_factorisation(params)
    assert r1 == pytest.approx(mo.mean, rel=1e-9)
    assert r2 == pytest.approx(mo.second_moment, rel=1e-9)
    assert r3 == pytest.approx(mo.third_moment, rel=1e-9)
    assert r2 - r1**2 == pytest.approx(mo.variance, rel=1e-9)


def _pascal_support(m, p, tol=1e-15):
    """Pascal support and pmf, truncated where t * pmf(t)'s geometric remainder is below tol."""
    ts, ws = [], []
    t = m
    while True:
        w = pascal_pmf(t, m, p)
        ts.append(t)
        ws.append(w)
        ratio = (1 - p) * t / (t - m + 1) * (t + 1) / t  # (t+1) pmf(t+1) / (t pmf(t))
        if ratio < 1 and t * w * ratio / (1 - ratio) < tol * m / p:
            return np.array(ts, float), np.array(ws)
        t += 1


@pytest.mark.parametrize("n", [1, 2, 4, 6])
@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_unbiased_by_enumeration(n, m, p):
    ts, wt = _pascal_support(m, p)
    total = 0.0
    for x in range(n + 1):
        bx = binom_pmf(x, n, p)
        total += math.fsum(x * ts / m * bx * wt)
    assert total == pytest.approx(n, abs=1e-9)


def test_variance_from_survival_function():
    params = ModelParams(100, 0.6, 10)
    m = params.m
    # N_hat lives on j/m; P(N_hat = j/m) = S((j-1)/m) - S(j/m)
    js = np.arange(1, 8001)
    surv = np.array([nhat_survival(j / m, params) for j in range(0, 8001)])
    probs = surv[:-1] - surv[1:]
    second = math.fsum((js / m) ** 2 * probs)
    mean = math.fsum(js / m * probs)
    assert mean == pytest.approx(100, rel=1e-8)
    assert second - mean**2 == pytest.approx(nhat_moments(params).variance, rel=1e-4)


def _draw_nhat(params, size, seed):
    rng = make_rng(seed)
    x = sample_binomial(rng, params.n_true, params.p, size=size)
    t = sample_pascal(rng, params.m, params.p, size=size)
    return x * t / params.m


@pytest.mark.parametrize("n, p, m, std, skew", TABLE2)
def test_monte_carlo_mean_and_variance(n, p, m, std, skew):
    params = ModelParams(n, p, m)
    mo = nhat_moments(params)
    draws = _draw_nhat(params, 10**6, seed=31 + m)
    size = draws.size
    assert abs(draws.mean() - n) < 5 * mo.std / math.sqrt(size)
    dev2 = (draws - draws.mean()) ** 2
    se_var = dev2.std() / math.sqrt(size)
    assert abs(draws.var(ddof=1) - mo.variance) < 5 * se_var


def test_skewness_positive_and_decreasing_in_m():
    for p in (0.6, 0.3):
        skews = [nhat_moments(ModelParams(500, p, m)).skewness for m in (10, 20, 30, 40)]
        assert all(s > 0 for s in skews)
        assert all(b < a for a, b in zip(skews, skews[1:]))
