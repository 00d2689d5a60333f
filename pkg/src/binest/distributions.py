"""Binomial and Pascal / negative-binomial laws: exact evaluation and sampling.

Conventions
-----------
``B(n, p)``      number of successes in ``n`` Bernoulli(p) trials.
``Pasc(m, p)``   number of trials needed to observe ``m`` successes, support {m, m+1, ...}.
``NB(m, p)``     ``Y = T - m``, failures before the m-th success, support {0, 1, ...}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from binest.errors import DomainError

# Tail-sum truncation: stop once the next term is negligible relative to the
# accumulated sum and the geometric bound on everything after it is tiny.
_REL_TERM_TOL = 1e-16
_ABS_REMAINDER_TOL = 1e-14


@dataclass(frozen=True)
class ModelParams:
    """True world for the binomial / Pascal pair: ``X ~ B(n_true, p)``, ``T ~ Pasc(m, p)``."""

    n_true: int
    p: float
    m: int

    def __post_init__(self):
        _check_count(self.n_true, "n_true")
        _check_count(self.m, "m")
        _check_prob(self.p)

    @property
    def q(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True)
class RngSeed:
    """A base seed plus a stream index; each pair yields an independent, reproducible stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.stream_id < 0:
            raise DomainError(f"stream_id must be non-negative, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    return RngSeed(seed, stream_id).generator()


def _check_prob(p):
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p}")


def _check_count(n, name):
    if int(n) != n or n < 1:
        raise DomainError(f"{name} must be a positive integer, got {n}")


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirlerr(n: np.ndarray) -> np.ndarray:
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)``: log-gamma for small ``n``, asymptotic series beyond."""
    n = np.asarray(n, dtype=float)
    small = n <= 15
    out = np.empty_like(n)
    ns = np.where(small & (n > 0), n, 1.0)
    out_small = special.gammaln(ns + 1.0) - (ns + 0.5) * np.log(ns) + ns - _LOG_SQRT_2PI
    nl = np.where(small, 16.0, n)
    nn = nl * nl
    out_large = (1 / 12 - (1 / 360 - (1 / 1260 - (1 / 1680 - 1 / 1188 / nn) / nn) / nn) / nn) / nl
    out = np.where(small, out_small, out_large)
    return np.where(n == 0, 0.0, out)


def _bd0(x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Deviance term ``x log(x/mu) + mu - x`` without cancellation near ``x = mu``."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    near = np.abs(x - mu) < 0.1 * (x + mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = x * np.log(x / mu) + mu - x
    v = (x - mu) / (x + mu)
    s = (x - mu) * v
    ej = 2.0 * x * v
    v2 = v * v
    for j in range(1, 25):
        ej = ej * v2
        s = s + ej / (2 * j + 1)
    return np.where(near, s, direct)


def _log_binom_pmf_array(j, n, p: float) -> np.ndarray:
    """Log binomial pmf by the saddle-point (Loader) decomposition of the log-gamma terms.

    ``j`` and ``n`` broadcast against each other.
    """
    j = np.asarray(j, dtype=float)
    n = np.asarray(n, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.clip(j, 1.0, np.maximum(n - 1.0, 1.0))
        lc = (
            _stirlerr(n)
            - _stirlerr(inner)
            - _stirlerr(n - inner)
            - _bd0(inner, n * p)
            - _bd0(n - inner, n * q)
            + 0.5 * np.log(n / (2.0 * math.pi * inner * (n - inner)))
        )
    lc = np.where(j == 0, n * math.log1p(-p), lc)
    lc = np.where(j == n, n * math.log(p), lc)
    return lc


def _log_binom_pmf(j: int, n: int, p: float) -> float:
    return float(_log_binom_pmf_array(j, n, p))


def binom_pmf(j: int, n: int, p: float) -> float:
    """``C(n, j) p^j (1-p)^(n-j)``, evaluated through log-gamma."""
    _check_count(n, "n")
    _check_prob(p)
    if j < 0 or j > n or int(j) != j:
        raise DomainError(f"j must be an integer in [0, {n}], got {j}")
    return math.exp(_log_binom_pmf(int(j), int(n), p))


def binom_pmf_vector(n: int, p: float) -> np.ndarray:
    """All binomial probabilities ``b(0..n, n, p)`` as an array."""
    _check_count(n, "n")
    _check_prob(p)
    return np.exp(_log_binom_pmf_array(np.arange(n + 1), n, p))


def binom_cdf(j: int, n: int, p: float) -> float:
    """``P(X <= j)`` by direct summation of pmf terms."""
    _check_count(n, "n")
    _check_prob(p)
    if j < 0 or j > n or int(j) != j:
        raise DomainError(f"j must be an integer in [0, {n}], got {j}")
    if j == n:
        return 1.0
    total = math.fsum(math.exp(_log_binom_pmf(i, n, p)) for i in range(int(j) + 1))
    return min(total, 1.0)


def negbin_pmf(k: int, m: int, p: float) -> float:
    """``P(Y = k)`` for ``Y ~ NB(m, p)``."""
    _check_count(m, "m")
    _check_prob(p)
    if k < 0 or int(k) != k:
        raise DomainError(f"k must be a non-negative integer, got {k}")
    return math.exp(_log_negbin_pmf(int(k), m, p))


def _log_negbin_pmf(k, m: int, p: float):
    # C(k+m-1, k) p^m q^k = m / (k+m) * b(m; k+m, p)
    k = np.asarray(k, dtype=float)
    out = np.log(m / (k + m)) + _log_binom_pmf_array(m, k + m, p)
    return float(out) if out.ndim == 0 else out


def negbin_tail(y: float, m: int, p: float, method: str = "sum") -> float:
    """Survival ``P(Y > y)`` of ``Y ~ NB(m, p)`` for real ``y``.

    ``P(Y > y) = P(Y >= floor(y) + 1)``; any negative ``y`` gives 1.

    Methods:

    ``"sum"``    lookup in :func:`negbin_survival_table` (pmf terms summed
                 backwards from a certified far tail); falls back to
                 ``"direct"`` when the table would be too long.
    ``"direct"`` adds the upper-tail pmf terms from ``floor(y) + 1`` with the
                 ratio ``pmf(k+1)/pmf(k) = q (k+m)/(k+1)``.  Once that ratio
                 ``r`` is below one it keeps decreasing, so the remainder after
                 a term ``t`` is at most ``t r / (1 - r)``; summation stops when
                 the term is below ``1e-16 * sum`` and the bound below ``1e-14``.
    ``"beta"``   ``P(Y >= j) = I_q(j, m)`` (regularized incomplete beta).
    """
    _check_count(m, "m")
    _check_prob(p)
    if y < 0:
        return 1.0
    j0 = math.floor(y) + 1
    if method == "beta":
        return float(special.betainc(j0, m, 1.0 - p))
    if method == "sum":
        table = negbin_survival_table(m, p)
        if table is not None:
            return float(table[min(j0, table.size - 1)])
        return _negbin_upper_sum(j0, m, p)
    if method == "direct":
        return _negbin_upper_sum(j0, m, p)
    raise DomainError(f"unknown method {method!r}")


def _negbin_upper_sum(j0: int, m: int, p: float) -> float:
    q = 1.0 - p
    term = math.exp(_log_negbin_pmf(j0, m, p))
    # Terms can underflow at j0 while still rising towards the mode.
    if term == 0.0:
        mode = max(0, math.floor((m - 1) * q / p))
        if j0 >= mode:
            return 0.0
        return max(0.0, 1.0 - negbin_cdf_by_sum(j0 - 1, m, p))
    total = 0.0
    k = j0
    while True:
        total += term
        ratio = q * (k + m) / (k + 1)
        term *= ratio
        k += 1
        if ratio < 1.0:
            nxt = q * (k + m) / (k + 1)
            remainder = term / (1.0 - nxt) if nxt < 1.0 else math.inf
            if term <= _REL_TERM_TOL * total and remainder <= _ABS_REMAINDER_TOL:
                break
            # Subnormal terms stop shrinking under rounding; below this the
            # remainder cannot affect any double-precision result.
            if remainder < 1e-290:
                break
    return min(total, 1.0)


_MAX_TABLE = 1 << 22


@lru_cache(maxsize=64)
def negbin_survival_table(m: int, p: float) -> np.ndarray | None:
    """``S[j] = P(Y >= j)`` for ``j = 0..J``, with ``S[J]`` negligible (below 1e-290).

    Built backwards from the certified upper-tail sum past ``J``: small tails
    keep full relative precision and, as a running sum of non-negative terms,
    the table is exactly nonincreasing.  Returns None if ``J`` would exceed
    ``2**22`` (extremely small ``p``).  The array is read-only.
    """
    _check_count(m, "m")
    _check_prob(p)
    q = 1.0 - p
    mode = max(0, math.floor((m - 1) * q / p))
    jmax = mode + 64
    while _log_negbin_pmf(jmax, m, p) > -680.0:
        jmax *= 2
        if jmax > _MAX_TABLE:
            return None
    pmf = np.exp(_log_negbin_pmf(np.arange(jmax + 1), m, p))
    tail = _negbin_upper_sum(jmax + 1, m, p)
    surv = np.cumsum(pmf[::-1])[::-1] + tail
    surv = np.minimum(surv, 1.0)
    surv[0] = 1.0
    surv.setflags(write=False)
    return surv


def negbin_cdf_by_sum(y: int, m: int, p: float) -> float:
    """``sum_{k<=y} P(Y=k)``; brute-force reference for tail checks."""
    return math.fsum(negbin_pmf(k, m, p) for k in range(int(y) + 1))


def pascal_pmf(t: int, m: int, p: float) -> float:
    """``P(T = t)`` for ``T ~ Pasc(m, p)``; zero below ``m``."""
    if t < m:
        return 0.0
    return negbin_pmf(t - m, m, p)


def sample_binomial(rng: np.random.Generator, n: int, p: float, size=None):
    """Draw from ``B(n, p)``; a scalar int when ``size`` is None."""
    _check_count(n, "n")
    _check_prob(p)
    out = rng.binomial(n, p, size=size)
    return int(out) if size is None else out


def sample_pascal(rng: np.random.Generator, m: int, p: float, size=None):
    """Draw ``T ~ Pasc(m, p)`` as a sum of ``m`` geometric waiting times.

    Each geometric on {1, 2, ...} is produced by inversion: with ``V``
    uniform on (0, 1], ``floor(log V / log q) + 1`` has ``P(G > g) = q**g``.
    """
    _check_count(m, "m")
    _check_prob(p)
    log_q = math.log1p(-p)
    n = 1 if size is None else size
    t = np.zeros(n, dtype=np.int64)
    for _ in range(m):
        v = 1.0 - rng.random(n)
        t += np.floor(np.log(v) / log_q).astype(np.int64) + 1
    return int(t[0]) if size is None else t
