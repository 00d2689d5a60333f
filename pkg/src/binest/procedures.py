"""Two-stage and sequential sampling procedures and their replication harness."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from binest.design import k_two_stage, k_two_stage_array
from binest.distributions import ModelParams, RngSeed, sample_binomial, sample_pascal
from binest.errors import DegeneratePilotError, DomainError, ReplicationError, RunawayStoppingError

log = logging.getLogger(__name__)

MAX_PILOT_REDRAWS = 100
DEFAULT_MAX_K = 10**7
MAX_ABORT_FRACTION = 0.01


class Procedure(str, Enum):
    TWO_STAGE = "two-stage"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class ProcedureConfig:
    """Simulation truth plus procedure settings.

    ``resample=True`` selects the fresh-second-sample variant of the
    two-stage procedure: when the pilot is too small, a brand new sample of
    the required size is drawn and the pilot is discarded.  The default
    augments the pilot with the missing pairs.
    """

    params: ModelParams
    k1: int
    gamma: float
    procedure: Procedure = Procedure.SEQUENTIAL
    replicas: int = 1000
    seed: int = 0
    resample: bool = False
    max_k: int = DEFAULT_MAX_K

    def __post_init__(self):
        object.__setattr__(self, "procedure", Procedure(self.procedure))
        if self.k1 < 2:
            raise DomainError(f"k1 must be at least 2, got {self.k1}")
        if self.replicas < 1:
            raise DomainError(f"replicas must be positive, got {self.replicas}")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.max_k < self.k1:
            raise DomainError("max_k must be at least k1")


@dataclass(frozen=True)
class RunResult:
    k_final: int
    n_hat: float
    p_hat: float
    half_width: float
    x_bar: float
    t_bar: float
    k_pilot_requirement: int
    pilot_redraws: int = 0


@dataclass(frozen=True)
class ReplicationSummary:
    mean_k: float
    std_k: float
    q025_k: float
    q975_k: float
    mean_n_hat: float
    mean_half_width: float
    mean_p_hat: float
    replicas: int
    aborted: int = 0
    abort_reasons: tuple = field(default=())


def _draw_pairs(rng, params: ModelParams, size: int):
    xs = sample_binomial(rng, params.n_true, params.p, size=size)
    ts = sample_pascal(rng, params.m, params.p, size=size)
    return xs, ts


def _draw_pilot(rng, params: ModelParams, k1: int):
    """Pilot of ``k1`` pairs, redrawn while every binomial count is zero."""
    for redraws in range(MAX_PILOT_REDRAWS + 1):
        xs, ts = _draw_pairs(rng, params, k1)
        if xs.sum() > 0:
            return xs, ts, redraws
    raise DegeneratePilotError(
        f"all binomial counts were zero in {MAX_PILOT_REDRAWS + 1} pilots of size {k1}"
    )


def _result(sum_x, sum_t, k, m, gamma, k_req, redraws) -> RunResult:
    x_bar, t_bar = sum_x / k, sum_t / k
    n_hat = x_bar * t_bar / m
    return RunResult(
        k_final=int(k),
        n_hat=n_hat,
        p_hat=m / t_bar,
        half_width=gamma * n_hat,
        x_bar=x_bar,
        t_bar=t_bar,
        k_pilot_requirement=int(k_req),
        pilot_redraws=redraws,
    )


def run_two_stage(config: ProcedureConfig, rng: np.random.Generator) -> RunResult:
    """Pilot of ``k1`` pairs, then top up (or resample) to the plug-in size."""
    params, k1, gamma, m = config.params, config.k1, config.gamma, config.params.m
    xs, ts, redraws = _draw_pilot(rng, params, k1)
    k_req = k_two_stage(xs.mean(), ts.mean(), m, gamma)
    if k_req <= k1:
        return _result(int(xs.sum()), int(ts.sum()), k1, m, gamma, k_req, redraws)
    if k_req > config.max_k:
        raise RunawayStoppingError(f"second-stage size {k_req} exceeds cap {config.max_k}")
    if config.resample:
        xs2, ts2 = _draw_pairs(rng, params, k_req)
        return _result(int(xs2.sum()), int(ts2.sum()), k_req, m, gamma, k_req, redraws)
    xs2, ts2 = _draw_pairs(rng, params, k_req - k1)
    return _result(int(xs.sum() + xs2.sum()), int(ts.sum() + ts2.sum()), k_req, m, gamma, k_req, redraws)


def run_sequential(config: ProcedureConfig, rng: np.random.Generator) -> RunResult:
    """Pilot of ``k1`` pairs, then one pair at a time until ``k > K_TS(k)``.

    Pairs after the pilot are drawn in blocks and the stopping rule is
    evaluated for every prefix of the block, which is the same as adding one
    pair at a time; the unused tail of the last block is discarded.
    """
    params, k1, gamma, m = config.params, config.k1, config.gamma, config.params.m
    xs, ts, redraws = _draw_pilot(rng, params, k1)
    sum_x, sum_t = int(xs.sum()), int(ts.sum())
    k_req = k_two_stage(sum_x / k1, sum_t / k1, m, gamma)
    if k1 > k_req:
        return _result(sum_x, sum_t, k1, m, gamma, k_req, redraws)

    k = k1
    crit = k_req
    while True:
        block = int(min(max(64, 1.1 * (crit - k) + 32), config.max_k - k))
        if block <= 0:
            raise RunawayStoppingError(f"stopping rule not met by k = {config.max_k}")
        bx, bt = _draw_pairs(rng, params, block)
        cx = sum_x + np.cumsum(bx)
        ct = sum_t + np.cumsum(bt)
        ks = k + np.arange(1, block + 1)
        crits = k_two_stage_array(cx / ks, ct / ks, m, gamma)
        stop = np.flatnonzero(ks > crits)
        if stop.size:
            i = int(stop[0])
            return _result(int(cx[i]), int(ct[i]), int(ks[i]), m, gamma, k_req, redraws)
        sum_x, sum_t, k, crit = int(cx[-1]), int(ct[-1]), int(ks[-1]), int(crits[-1])


_RUNNERS = {
    Procedure.TWO_STAGE: run_two_stage,
    Procedure.SEQUENTIAL: run_sequential,
}


def run_replica(config: ProcedureConfig, replica: int) -> RunResult:
    rng = RngSeed(config.seed, replica).generator()
    return _RUNNERS[config.procedure](config, rng)


def _safe_replica(args):
    config, replica = args
    try:
        return run_replica(config, replica)
    except (DegeneratePilotError, RunawayStoppingError) as exc:
        return exc


def run_replicas(config: ProcedureConfig, workers: int | None = None) -> list:
    """Per-replica results (or the exception that aborted a replica), in replica order."""
    jobs = [(config, r) for r in range(config.replicas)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_safe_replica, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_safe_replica(j) for j in jobs]


def summarize(results: list, replicas: int) -> ReplicationSummary:
    ok = [r for r in results if isinstance(r, RunResult)]
    failed = [r for r in results if not isinstance(r, RunResult)]
    if len(failed) > MAX_ABORT_FRACTION * replicas or not ok:
        raise ReplicationError(f"{len(failed)} of {replicas} replicas aborted: {failed[:3]}")
    if failed:
        log.warning("%d of %d replicas aborted", len(failed), replicas)
    ks = np.array([r.k_final for r in ok], dtype=float)
    q025, q975 = np.quantile(ks, [0.025, 0.975], method="inverted_cdf")
    return ReplicationSummary(
        mean_k=float(ks.mean()),
        std_k=float(ks.std(ddof=1)) if ks.size > 1 else math.nan,
        q025_k=float(q025),
        q975_k=float(q975),
        mean_n_hat=float(np.mean([r.n_hat for r in ok])),
        mean_half_width=float(np.mean([r.half_width for r in ok])),
        mean_p_hat=float(np.mean([r.p_hat for r in ok])),
        replicas=len(ok),
        aborted=len(failed),
        abort_reasons=tuple(str(e) for e in failed),
    )


def replicate(config: ProcedureConfig, workers: int | None = None) -> ReplicationSummary:
    """Run ``config.replicas`` independent replicas and aggregate the final sample sizes.

    Replica ``i`` uses the stream ``(config.seed, i)``, so the summary does not
    depend on ``workers``.  Quantiles are nearest-rank.
    """
    return summarize(run_replicas(config, workers), config.replicas)
