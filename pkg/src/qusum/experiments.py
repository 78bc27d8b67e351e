"""Monte Carlo estimates of false-alarm time and detection delay, threshold
sweeps with slope fits, and the numerical verification suites (dual-map
pushforward identity, data processing, compression convergence, optimality
chain through a channel).

The worst-case delay is estimated from runs with the change at step 0: a
CUSUM statistic sitting at its reset value 0 when the change happens is
the least favourable pre-change history.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .detection import (
    CENSORED,
    DEFAULT_HORIZON,
    PURPOSE_DELAY,
    PURPOSE_FALSE_ALARM,
    ChangePointModel,
    LlrTable,
    build_llr_table,
    stop_times,
)
from .entropy import measured_relative_entropy, quantum_relative_entropy
from .errors import InsufficientSpread, ZeroDivergence
from .measurement import (
    KrausChannel,
    Povm,
    apply_channel,
    compression_channel,
    pushforward_povm,
    random_channel,
    random_density_matrix,
    random_povm,
    stream,
)
from .povm_search import SearchConfig, optimize_measurement
from .states import DensityMatrix

logger = logging.getLogger(__name__)

PURPOSE_PILOT = 3
MIN_TRIALS = 100
CENSORING_WARN_FRACTION = 1e-3
CSV_HEADER = "h,tfa_mean,tfa_stderr,delay_mean,delay_stderr,n_trials,censored"


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    censored: int
    n_trials: int

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n_trials

    @property
    def is_lower_bound(self) -> bool:
        return self.censored_fraction > CENSORING_WARN_FRACTION


def _summarize(times: np.ndarray, horizon: int) -> Estimate:
    censored = int(np.sum(times == CENSORED))
    # censored runs enter at the horizon, which makes the mean a lower bound
    t = np.where(times == CENSORED, horizon, times).astype(float)
    stderr = float(t.std(ddof=1) / math.sqrt(t.size)) if t.size > 1 else math.nan
    return Estimate(float(t.mean()), stderr, censored, int(t.size))


def _check_trials(n_trials: int) -> None:
    if n_trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {n_trials}")


def tfa_from_table(table, block_l, h, n_trials, horizon=DEFAULT_HORIZON, seed=0, jobs=1) -> Estimate:
    _check_trials(n_trials)
    t = stop_times(table, h, None, block_l, horizon, seed, n_trials, PURPOSE_FALSE_ALARM, jobs)
    return _summarize(t, horizon)


def delay_from_table(table, block_l, h, n_trials, horizon=DEFAULT_HORIZON, seed=0, jobs=1) -> Estimate:
    _check_trials(n_trials)
    if table.d_qp <= 0:
        raise ZeroDivergence("D(q||p) = 0: the measurement cannot see the change")
    t = stop_times(table, h, 0, block_l, horizon, seed, n_trials, PURPOSE_DELAY, jobs)
    return _summarize(t, horizon)


def estimate_tfa(
    model: ChangePointModel, povm: Povm, block_l: int, h: float, n_trials: int,
    horizon: int = DEFAULT_HORIZON, seed: int = 0, jobs: int = 1,
) -> Estimate:
    """Mean time to false alarm: stop time with no change (``model.nu`` must be None)."""
    if model.nu is not None:
        raise ValueError("false-alarm runs need a model without change point (nu=None)")
    table = build_llr_table(model.sigma, model.rho, povm, block_l)
    return tfa_from_table(table, block_l, h, n_trials, horizon, seed, jobs)


def estimate_delay(
    model: ChangePointModel, povm: Povm, block_l: int, h: float, n_trials: int,
    horizon: int = DEFAULT_HORIZON, seed: int = 0, jobs: int = 1,
) -> Estimate:
    """Worst-case mean delay, from runs with the change at step 0 (``model.nu`` must be 0)."""
    if model.nu != 0:
        raise ValueError("delay runs need nu=0")
    table = build_llr_table(model.sigma, model.rho, povm, block_l)
    return delay_from_table(table, block_l, h, n_trials, horizon, seed, jobs)


# -- trade-off curves --------------------------------------------------------


@dataclass(frozen=True)
class TradeoffRow:
    h: float
    tfa_mean: float
    tfa_stderr: float
    delay_mean: float
    delay_stderr: float
    n_trials: int
    censored: int
    n_trials_delay: int = 0


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    theory_slope: float
    quantum_slope: float
    n_points: int

    @property
    def ratio_to_theory(self) -> float:
        return self.slope / self.theory_slope


@dataclass
class TradeoffConfig:
    sigma: DensityMatrix
    rho: DensityMatrix
    povm: Povm
    block_l: int = 1
    thresholds: Optional[Sequence[float]] = None  # None: automatic grid
    n_points: int = 8
    tfa_range: tuple = (1e2, 1e5)
    n_trials_delay: int = 10_000
    n_trials_tfa: int = 2_000
    horizon: int = DEFAULT_HORIZON
    seed: int = 0
    jobs: int = 1
    pilot_trials: int = 400
    label: str = ""


@dataclass
class TradeoffResult:
    rows: list
    fit: SlopeFit
    d_measured: float  # D(q||p) per single state
    d_quantum: float
    label: str = ""
    block_l: int = 1
    notes: list = field(default_factory=list)


def auto_thresholds(table: LlrTable, block_l: int, cfg: TradeoffConfig) -> np.ndarray:
    """Grid in h whose false-alarm times span ``cfg.tfa_range``.

    ln T_FA grows like h plus a constant for CUSUM; a pilot run at the
    geometric middle of the range measures that constant.
    """
    lo, hi = cfg.tfa_range
    h_mid = 0.5 * (math.log(lo) + math.log(hi))
    pilot = stop_times(table, h_mid, None, block_l, cfg.horizon, cfg.seed, cfg.pilot_trials, PURPOSE_PILOT, cfg.jobs)
    est = _summarize(pilot, cfg.horizon)
    offset = math.log(est.mean) - h_mid
    grid = np.linspace(math.log(lo) - offset, math.log(hi) - offset, cfg.n_points)
    return np.round(np.clip(grid, 1e-3, None), 6)


def fit_slope(rows: Sequence[TradeoffRow], theory_slope: float, quantum_slope: float) -> SlopeFit:
    """Least squares of delay against ln T_FA over rows without censoring."""
    used = [r for r in rows if r.censored == 0]
    if len(used) < 3:
        raise InsufficientSpread(f"only {len(used)} uncensored rows to fit")
    x = np.log([r.tfa_mean for r in used])
    if x.max() - x.min() < math.log(100.0):
        raise InsufficientSpread(
            f"false-alarm times span only {(x.max() - x.min()) / math.log(10):.2f} decades"
        )
    y = np.array([r.delay_mean for r in used])
    reg = stats.linregress(x, y)
    return SlopeFit(
        float(reg.slope), float(reg.intercept), float(reg.rvalue**2), float(reg.stderr),
        theory_slope, quantum_slope, len(used),
    )


def tradeoff_experiment(cfg: TradeoffConfig) -> TradeoffResult:
    """Sweep thresholds, estimate T_FA and delay at each, fit delay vs ln T_FA.

    Stream seeds are shared across thresholds, so rows at different h are
    paired (same outcome streams).
    """
    q_rho = quantum_relative_entropy(cfg.sigma, cfg.rho)
    table = build_llr_table(cfg.sigma, cfg.rho, cfg.povm, cfg.block_l)
    if table.d_qp <= 0:
        raise ZeroDivergence("D(q||p) = 0 for this measurement: nothing to detect")
    d_measured = table.d_qp / cfg.block_l
    hs = np.sort(np.asarray(cfg.thresholds, dtype=float)) if cfg.thresholds is not None else auto_thresholds(table, cfg.block_l, cfg)
    rows = []
    notes = []
    for h in hs:
        tfa = tfa_from_table(table, cfg.block_l, h, cfg.n_trials_tfa, cfg.horizon, cfg.seed, cfg.jobs)
        delay = delay_from_table(table, cfg.block_l, h, cfg.n_trials_delay, cfg.horizon, cfg.seed, cfg.jobs)
        if tfa.is_lower_bound:
            notes.append(f"h={h:g}: {tfa.censored}/{tfa.n_trials} false-alarm runs censored; T_FA is a lower bound")
        rows.append(
            TradeoffRow(float(h), tfa.mean, tfa.stderr, delay.mean, delay.stderr, tfa.n_trials,
                        tfa.censored + delay.censored, delay.n_trials)
        )
        logger.info("h=%.4g T_FA=%.4g delay=%.4g", h, tfa.mean, delay.mean)
    quantum_slope = 1.0 / q_rho.value if q_rho.value > 0 else math.inf
    fit = fit_slope(rows, 1.0 / d_measured, quantum_slope)
    return TradeoffResult(rows, fit, d_measured, q_rho.value, cfg.label, cfg.block_l, notes)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def tradeoff_csv(result: TradeoffResult) -> str:
    lines = [CSV_HEADER]
    for r in result.rows:
        lines.append(",".join(_fmt(v) for v in (r.h, r.tfa_mean, r.tfa_stderr, r.delay_mean, r.delay_stderr, r.n_trials, r.censored)))
    f = result.fit
    footer = {
        "slope": f.slope,
        "intercept": f.intercept,
        "r_squared": f.r_squared,
        "slope_stderr": f.slope_stderr,
        "theory_slope": f.theory_slope,
        "quantum_slope": f.quantum_slope,
        "d_measured": result.d_measured,
        "d_quantum": result.d_quantum,
        "block_l": result.block_l,
        "n_trials_delay": result.rows[0].n_trials_delay if result.rows else 0,
    }
    lines += [f"# {k}={_fmt(v)}" for k, v in footer.items()]
    lines += [f"# note: {n}" for n in result.notes]
    return "\n".join(lines) + "\n"


def delay_at_tfa(result: TradeoffResult, target_tfa: float) -> tuple[float, float]:
    """Delay and its stderr interpolated linearly in ln T_FA at ``target_tfa``."""
    rows = sorted((r for r in result.rows if r.censored == 0), key=lambda r: r.tfa_mean)
    x = np.log([r.tfa_mean for r in rows])
    t = math.log(target_tfa)
    if not x[0] <= t <= x[-1]:
        raise ValueError(f"target T_FA {target_tfa:g} outside the measured range")
    k = int(np.clip(np.searchsorted(x, t), 1, len(rows) - 1))
    w = (t - x[k - 1]) / (x[k] - x[k - 1])
    a, b = rows[k - 1], rows[k]
    delay = (1 - w) * a.delay_mean + w * b.delay_mean
    se = math.hypot((1 - w) * a.delay_stderr, w * b.delay_stderr)
    return delay, se


def compare_at_matched_tfa(a: TradeoffResult, b: TradeoffResult, target_tfa: Optional[float] = None) -> dict:
    """Delays of two curves at a common false-alarm time (default: the largest shared one)."""
    def span(r):
        xs = [row.tfa_mean for row in r.rows if row.censored == 0]
        return min(xs), max(xs)

    lo = max(span(a)[0], span(b)[0])
    hi = min(span(a)[1], span(b)[1])
    if lo > hi:
        raise InsufficientSpread("the two curves share no false-alarm range")
    target = hi if target_tfa is None else target_tfa
    da, sa = delay_at_tfa(a, target)
    db, sb = delay_at_tfa(b, target)
    return {"target_tfa": target, "delay_a": da, "stderr_a": sa, "delay_b": db, "stderr_b": sb,
            "stderr": math.hypot(sa, sb)}


# -- verification suites -----------------------------------------------------


@dataclass
class VerificationReport:
    name: str
    passed: bool
    max_discrepancy: float = 0.0
    n_instances: int = 0
    details: list = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} ({self.n_instances} instances, max discrepancy {self.max_discrepancy:.3e})"


def _gap(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b)


def pushforward_instance(rng: np.random.Generator, support_violating: bool = False) -> tuple:
    d_in = int(rng.integers(2, 6))
    d_out = int(rng.integers(2, 6))
    ch = random_channel(d_in, d_out, int(rng.integers(1, 5)), rng)
    m = random_povm(d_out, int(rng.integers(2, 7)), rng)
    if support_violating:
        sigma = random_density_matrix(d_in, rng, rank=1)
        rho = random_density_matrix(d_in, rng, rank=1)
    else:
        sigma = random_density_matrix(d_in, rng)
        rho = random_density_matrix(d_in, rng)
    return ch, m, sigma, rho


def verify_lemma3(n_random: int = 100, seed: int = 0, tol: float = 1e-9, instances=None) -> VerificationReport:
    """Check D^{alpha(M)}(sigma||rho) = D^M(ch(sigma)||ch(rho)) with alpha the dual map.

    Both sides are computed independently: the left measures the original
    states with the pulled-back POVM, the right measures the channel outputs.
    Every tenth random instance uses distinct pure states.
    """
    if instances is None:
        rng = stream(seed, 0, 31)
        instances = [pushforward_instance(rng, support_violating=(k % 10 == 9)) for k in range(n_random)]
    worst = 0.0
    details = []
    for ch, m, sigma, rho in instances:
        lhs = measured_relative_entropy(sigma, rho, pushforward_povm(ch, m))
        rhs = measured_relative_entropy(apply_channel(ch, sigma), apply_channel(ch, rho), m)
        gap = _gap(lhs, rhs)
        worst = max(worst, gap)
        details.append((lhs, rhs))
    return VerificationReport("lemma3", worst < tol, worst, len(instances), details)


def verify_dpi(n_random: int = 200, seed: int = 0, tol: float = 1e-9) -> VerificationReport:
    """Data processing for channels and for measurements on random instances.

    The reported discrepancy is the largest excess of a processed divergence
    over the unprocessed one (0 when the inequality holds everywhere).
    """
    rng = stream(seed, 0, 32)
    worst = -math.inf
    details = []
    for _ in range(n_random):
        d_in = int(rng.integers(2, 7))
        d_out = int(rng.integers(2, 7))
        sigma, rho = random_density_matrix(d_in, rng), random_density_matrix(d_in, rng)
        ch = random_channel(d_in, d_out, int(rng.integers(1, 5)), rng)
        m = random_povm(d_in, int(rng.integers(2, 7)), rng)
        d = quantum_relative_entropy(sigma, rho).value
        d_ch = quantum_relative_entropy(apply_channel(ch, sigma), apply_channel(ch, rho)).value
        d_m = measured_relative_entropy(sigma, rho, m)
        worst = max(worst, d_ch - d, d_m - d)
        details.append((d, d_ch, d_m))
    return VerificationReport("dpi", worst <= tol, max(worst, 0.0), n_random, details)


def verify_compression_convergence(sigma: DensityMatrix, rho: DensityMatrix, slack: float = 1e-9, tol: float = 1e-8) -> VerificationReport:
    """D(ch_n(sigma)||ch_n(rho)) for n = 1..d-1 must be nondecreasing and end at D."""
    full = quantum_relative_entropy(sigma, rho)
    if not full.support_ok:
        raise ValueError("compression convergence needs finite D(sigma||rho)")
    d = rho.dim
    values = []
    for n in range(1, d):
        ch = compression_channel(n, d)
        values.append(quantum_relative_entropy(apply_channel(ch, sigma), apply_channel(ch, rho)).value)
    drops = [values[k] - values[k + 1] for k in range(len(values) - 1)]
    worst_drop = max(drops, default=0.0)
    terminal = abs(values[-1] - full.value) if values else 0.0
    passed = worst_drop <= slack and terminal <= tol
    details = [(n, v) for n, v in zip(range(1, d), values)] + [("D", full.value)]
    return VerificationReport("compression", passed, max(terminal, worst_drop, 0.0), len(values), details)


def verify_compression_suite(n_pairs: int = 20, dim: int = 5, seed: int = 0) -> VerificationReport:
    rng = stream(seed, 0, 33)
    reports = [
        verify_compression_convergence(random_density_matrix(dim, rng), random_density_matrix(dim, rng))
        for _ in range(n_pairs)
    ]
    worst = max(r.max_discrepancy for r in reports)
    return VerificationReport("compression", all(r.passed for r in reports), worst, n_pairs, reports)


@dataclass
class OptimalityChainReport:
    direct: TradeoffResult
    reduced: TradeoffResult
    direct_value: float
    reduced_value: float
    tolerance: float
    passed: bool

    def summary(self) -> str:
        return (
            f"optimality-chain: {'PASS' if self.passed else 'FAIL'} "
            f"slope direct={self.direct.fit.slope:.4g} reduced={self.reduced.fit.slope:.4g} "
            f"quantum={self.direct.fit.quantum_slope:.4g}"
        )


def verify_optimality_chain(
    sigma: DensityMatrix,
    rho: DensityMatrix,
    channel: KrausChannel,
    cfg: TradeoffConfig,
    search: Optional[SearchConfig] = None,
    rel_tol: float = 0.1,
) -> OptimalityChainReport:
    """Compare the best direct measurement with the best one made after ``channel``.

    (a) optimizes a POVM on (sigma, rho); (b) optimizes on the channel
    outputs and pulls the POVM back through the dual map. Both trade-off
    runs share seeds. Passes when slope(b) >= slope(a) - noise and both
    slopes are >= (1 - rel_tol)/D(sigma||rho); noise is three combined slope
    standard errors.
    """
    search = search or SearchConfig()
    out_s, out_r = apply_channel(channel, sigma), apply_channel(channel, rho)
    reduced_d = quantum_relative_entropy(out_s, out_r)
    if reduced_d.value <= 0:
        raise ZeroDivergence("channel maps both states to the same output")
    best_direct = optimize_measurement(sigma, rho, search)
    best_reduced = optimize_measurement(out_s, out_r, search)
    pulled = pushforward_povm(channel, best_reduced.best_povm)

    def run(povm: Povm, label: str) -> TradeoffResult:
        c = TradeoffConfig(**{**cfg.__dict__, "sigma": sigma, "rho": rho, "povm": povm, "block_l": 1, "label": label})
        return tradeoff_experiment(c)

    a = run(best_direct.best_povm, "direct")
    b = run(pulled, "channel-reduced")
    noise = 3.0 * math.hypot(a.fit.slope_stderr, b.fit.slope_stderr)
    floor = (1.0 - rel_tol) * a.fit.quantum_slope
    passed = b.fit.slope >= a.fit.slope - noise and min(a.fit.slope, b.fit.slope) >= floor
    return OptimalityChainReport(a, b, best_direct.best_value, best_reduced.best_value, noise, passed)
