"""CUSUM on measurement outcomes (QUSUM).

Each incoming state, or block of ``l`` states, is measured with a fixed
POVM; the outcome's log-likelihood ratio ln(q/p) feeds the recursion
S <- max(0, S + llr) until S >= h. Infinite ratios are kept symbolic:
+inf stops at once, -inf resets S to 0.

Trials draw one uniform per measured block from their own stream, so the
vectorized engine (``stop_times``) and the step-by-step ``CusumDetector``
see the same outcomes for the same stream and agree exactly.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .entropy import OutcomeDistribution, kl_divergence
from .errors import AlreadyStopped, DimMismatch, HorizonNonpositive, MisalignedChangePoint
from .measurement import Povm, cdf_lookup, induced_distribution, stream
from .states import DensityMatrix, tensor_power

DEFAULT_HORIZON = 10**7
CENSORED = -1

# stream purposes, so false-alarm and delay runs never share draws
PURPOSE_FALSE_ALARM = 0
PURPOSE_DELAY = 1
PURPOSE_TRIAL = 2


@dataclass(frozen=True, eq=False)
class LlrTable:
    """Per-outcome log-likelihood ratios ln(q_i / p_i) in nats.

    Outcomes impossible under both laws get 0 (they are never drawn).
    """

    llr: np.ndarray
    p: np.ndarray
    q: np.ndarray
    d_qp: float
    d_pq: float

    @property
    def cdf_pre(self) -> np.ndarray:
        return np.cumsum(self.p)

    @property
    def cdf_post(self) -> np.ndarray:
        return np.cumsum(self.q)


def llr_from_distributions(q: OutcomeDistribution, p: OutcomeDistribution) -> LlrTable:
    qv, pv = q.probs, p.probs
    if qv.shape != pv.shape:
        raise DimMismatch(f"outcome laws of length {qv.size} and {pv.size}")
    llr = np.zeros(qv.size)
    both = (qv > 0) & (pv > 0)
    llr[both] = np.log(qv[both] / pv[both])
    llr[(qv > 0) & (pv == 0)] = math.inf
    llr[(qv == 0) & (pv > 0)] = -math.inf
    llr.setflags(write=False)
    return LlrTable(llr, pv, qv, kl_divergence(qv, pv), kl_divergence(pv, qv))


def build_llr_table(sigma: DensityMatrix, rho: DensityMatrix, povm: Povm, block_l: int = 1) -> LlrTable:
    """LLR table for ``povm`` applied to rho^(x)l (pre-change) and sigma^(x)l (post)."""
    if sigma.dim != rho.dim:
        raise DimMismatch(f"states have dims {sigma.dim} and {rho.dim}")
    if povm.dim != rho.dim**block_l:
        raise DimMismatch(f"POVM dim {povm.dim} != {rho.dim}^{block_l}")
    p = induced_distribution(povm, tensor_power(rho, block_l))
    q = induced_distribution(povm, tensor_power(sigma, block_l))
    return llr_from_distributions(q, p)


@dataclass(frozen=True)
class CusumDetector:
    h: float
    statistic: float = 0.0
    n: int = 0
    stopped: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"threshold must be positive, got {self.h}")


def cusum_step(det: CusumDetector, llr_value: float) -> CusumDetector:
    if det.stopped:
        raise AlreadyStopped(f"detector already stopped at n={det.n}")
    s = max(0.0, det.statistic + llr_value)
    return replace(det, statistic=s, n=det.n + 1, stopped=s >= det.h)


@dataclass(frozen=True)
class ChangePointModel:
    """rho for steps <= nu, sigma afterwards; ``nu=None`` means no change."""

    rho: DensityMatrix
    sigma: DensityMatrix
    nu: Optional[int] = None

    def __post_init__(self):
        if self.rho.dim != self.sigma.dim:
            raise DimMismatch(f"states have dims {self.rho.dim} and {self.sigma.dim}")
        if self.nu is not None and self.nu < 0:
            raise ValueError(f"change point must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class TrialResult:
    stop_time: Optional[int]  # in single-state steps; None when censored
    nu: Optional[int]
    alarm_kind: str  # "false_alarm" | "detection" | "censored"

    @property
    def censored(self) -> bool:
        return self.stop_time is None


def classify(stop_time: Optional[int], nu: Optional[int]) -> TrialResult:
    if stop_time is None:
        return TrialResult(None, nu, "censored")
    if nu is None or stop_time <= nu:
        return TrialResult(stop_time, nu, "false_alarm")
    return TrialResult(stop_time, nu, "detection")


@numba.njit(nogil=True, cache=True)
def _lookup(cdf, x):
    lo, hi = 0, cdf.size
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return min(lo, cdf.size - 1)


@numba.njit(nogil=True, cache=True)
def _cusum_chunk(u, cdf_pre, cdf_post, llr, first_step, n_pre, s, h):
    """Run CUSUM over uniforms ``u`` for block steps first_step, first_step+1, ...

    Returns (steps consumed, stopped, statistic).
    """
    for k in range(u.size):
        step = first_step + k
        if step <= n_pre:
            idx = _lookup(cdf_pre, u[k] * cdf_pre[-1])
        else:
            idx = _lookup(cdf_post, u[k] * cdf_post[-1])
        s = max(0.0, s + llr[idx])
        if s >= h:
            return k + 1, True, s
    return u.size, False, s


def _pre_blocks(nu: Optional[int], block_l: int, horizon_blocks: int) -> int:
    if nu is None:
        return horizon_blocks + 1
    if nu % block_l:
        raise MisalignedChangePoint(f"change point {nu} is not a multiple of block length {block_l}")
    return nu // block_l


def stop_block(
    table: LlrTable, h: float, n_pre: int, horizon_blocks: int, rng: np.random.Generator, chunk: int = 64
) -> int:
    """Block index at which CUSUM stops for one stream, or ``CENSORED``."""
    cdf_pre, cdf_post = table.cdf_pre, table.cdf_post
    llr = np.ascontiguousarray(table.llr)
    s, done = 0.0, 0
    while done < horizon_blocks:
        n = min(chunk, horizon_blocks - done)
        used, stopped, s = _cusum_chunk(rng.random(n), cdf_pre, cdf_post, llr, done + 1, n_pre, s, h)
        done += used
        if stopped:
            return done
        chunk = min(chunk * 2, 1 << 16)
    return CENSORED


def stop_times(
    table: LlrTable,
    h: float,
    nu: Optional[int],
    block_l: int,
    horizon: int,
    seed: int,
    n_trials: int,
    purpose: int = PURPOSE_TRIAL,
    jobs: int = 1,
    first_trial: int = 0,
) -> np.ndarray:
    """Stop times (single-state steps, ``CENSORED`` = -1) for trials
    ``first_trial .. first_trial + n_trials - 1``.

    Trial k uses ``stream(seed, k, purpose)``; the output does not depend on
    ``jobs``.
    """
    if horizon <= 0:
        raise HorizonNonpositive(f"horizon must be positive, got {horizon}")
    horizon_blocks = horizon // block_l
    n_pre = _pre_blocks(nu, block_l, horizon_blocks)
    out = np.empty(n_trials, dtype=np.int64)

    def work(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            b = stop_block(table, h, n_pre, horizon_blocks, stream(seed, first_trial + i, purpose))
            out[i] = CENSORED if b == CENSORED else b * block_l

    jobs = max(1, min(jobs, n_trials))
    if jobs == 1:
        work(0, n_trials)
    else:
        bounds = np.linspace(0, n_trials, jobs + 1).astype(int)
        with ThreadPoolExecutor(jobs) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    return out


def run_trial(
    model: ChangePointModel,
    povm: Povm,
    block_l: int,
    h: float,
    horizon: int,
    rng: np.random.Generator,
    table: Optional[LlrTable] = None,
) -> TrialResult:
    """One QUSUM run on the change-point sequence of ``model``.

    The change point must be a multiple of ``block_l`` so that no block
    straddles it. The stop time is reported in single-state steps.
    """
    if horizon <= 0:
        raise HorizonNonpositive(f"horizon must be positive, got {horizon}")
    if model.nu is not None and model.nu % block_l:
        raise MisalignedChangePoint(f"change point {model.nu} is not a multiple of block length {block_l}")
    table = table or build_llr_table(model.sigma, model.rho, povm, block_l)
    horizon_blocks = horizon // block_l
    b = stop_block(table, h, _pre_blocks(model.nu, block_l, horizon_blocks), horizon_blocks, rng)
    return classify(None if b == CENSORED else b * block_l, model.nu)


def trace_trial(
    table: LlrTable, h: float, nu: Optional[int], block_l: int, horizon: int, rng: np.random.Generator
) -> tuple[TrialResult, list[tuple[int, int, float, float]]]:
    """Step-by-step run with a ``CusumDetector``; returns the result and
    ``(step, outcome, llr, statistic)`` rows. Consumes ``rng`` exactly like
    ``run_trial`` so both report the same stop time for the same stream."""
    if horizon <= 0:
        raise HorizonNonpositive(f"horizon must be positive, got {horizon}")
    horizon_blocks = horizon // block_l
    n_pre = _pre_blocks(nu, block_l, horizon_blocks)
    cdf_pre, cdf_post = table.cdf_pre, table.cdf_post
    det = CusumDetector(h)
    rows = []
    chunk, buf = 64, np.empty(0)
    pos = 0
    while det.n < horizon_blocks:
        if pos == buf.size:
            buf = rng.random(min(chunk, horizon_blocks - det.n))
            chunk = min(chunk * 2, 1 << 16)
            pos = 0
        u = buf[pos]
        pos += 1
        cdf = cdf_pre if det.n + 1 <= n_pre else cdf_post
        idx = cdf_lookup(cdf, u)
        det = cusum_step(det, float(table.llr[idx]))
        rows.append((det.n * block_l, idx, float(table.llr[idx]), det.statistic))
        if det.stopped:
            return classify(det.n * block_l, nu), rows
    return classify(None, nu), rows
