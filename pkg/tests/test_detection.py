import math

import numpy as np
import pytest
from scipy import stats

from qusum.detection import (
    CENSORED,
    ChangePointModel,
    CusumDetector,
    build_llr_table,
    cusum_step,
    run_trial,
    stop_block,
    stop_times,
    trace_trial,
)
from qusum.errors import AlreadyStopped, HorizonNonpositive, MisalignedChangePoint
from qusum.measurement import basis_povm, stream, tensor_power_povm
from qusum.states import DensityMatrix


def run_path(h, llrs):
    det, path = CusumDetector(h), []
    for x in llrs:
        det = cusum_step(det, x)
        path.append(det.statistic)
        if det.stopped:
            break
    return det, path


def test_recursion_example():
    det, path = run_path(3.0, [1.0, -2.0, 3.0])
    assert path == [1.0, 0.0, 3.0]
    assert det.stopped and det.n == 3


def test_infinite_llr():
    det, _ = run_path(5.0, [math.inf])
    assert det.stopped and det.n == 1
    det, path = run_path(5.0, [2.0, -math.inf, 1.0])
    assert path == [2.0, 0.0, 1.0] and not det.stopped


def test_step_after_stop():
    det, _ = run_path(1.0, [2.0])
    with pytest.raises(AlreadyStopped):
        cusum_step(det, 0.0)


def test_llr_table(commuting_pair):
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    np.testing.assert_allclose(t.llr, [math.log(1.8), math.log(0.2)], atol=1e-15)
    assert build_llr_table(rho, rho, basis_povm(2)).llr.tolist() == [0.0, 0.0]
    t2 = build_llr_table(sigma, rho, tensor_power_povm(basis_povm(2), 2), 2)
    expected = (t.llr[:, None] + t.llr[None, :]).ravel()
    np.testing.assert_allclose(t2.llr, expected, atol=1e-12)


def test_equal_states_never_stop(commuting_pair):
    _, rho = commuting_pair
    t = build_llr_table(rho, rho, basis_povm(2))
    assert np.all(stop_times(t, 1.0, None, 1, 10_000, seed=1, n_trials=20) == CENSORED)


def test_support_break_detects_at_first_occurrence():
    sigma = DensityMatrix(np.diag([0.5, 0.5]))
    rho = DensityMatrix(np.diag([1.0, 0.0]))
    t = build_llr_table(sigma, rho, basis_povm(2))
    assert t.llr[1] == math.inf
    for trial in range(50):
        result, rows = trace_trial(t, 100.0, 0, 1, 10_000, stream(9, trial, 2))
        first = next(step for step, idx, _, _ in rows if idx == 1)
        assert result.stop_time == first and result.alarm_kind == "detection"


def test_reproducible_and_consistent(commuting_pair):
    sigma, rho = commuting_pair
    model = ChangePointModel(rho, sigma, None)
    t = build_llr_table(sigma, rho, basis_povm(2))
    a = run_trial(model, basis_povm(2), 1, 5.0, 10**6, stream(123, 0, 2))
    b = run_trial(model, basis_povm(2), 1, 5.0, 10**6, stream(123, 0, 2))
    traced, _ = trace_trial(t, 5.0, None, 1, 10**6, stream(123, 0, 2))
    vec = stop_times(t, 5.0, None, 1, 10**6, seed=123, n_trials=1)
    assert a == b == traced
    assert a.alarm_kind == "false_alarm" and vec[0] == a.stop_time


def test_chunking_does_not_change_draws(commuting_pair):
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    for k in range(20):
        base = stop_block(t, 6.0, 10**9, 10**7, stream(5, k), chunk=64)
        assert stop_block(t, 6.0, 10**9, 10**7, stream(5, k), chunk=1) == base
        assert stop_block(t, 6.0, 10**9, 10**7, stream(5, k), chunk=1000) == base


def test_jobs_invariance(commuting_pair):
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    a = stop_times(t, 4.0, None, 1, 10**6, seed=8, n_trials=300, jobs=1)
    b = stop_times(t, 4.0, None, 1, 10**6, seed=8, n_trials=300, jobs=4)
    np.testing.assert_array_equal(a, b)


def test_horizon_censoring(commuting_pair):
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    out = stop_times(t, 30.0, None, 1, 50, seed=0, n_trials=10)
    assert np.all(out == CENSORED)


def test_argument_errors(commuting_pair):
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, tensor_power_povm(basis_povm(2), 2), 2)
    with pytest.raises(MisalignedChangePoint):
        stop_times(t, 3.0, 3, 2, 1000, seed=0, n_trials=1)
    with pytest.raises(HorizonNonpositive):
        stop_times(t, 3.0, None, 2, 0, seed=0, n_trials=1)
    with pytest.raises(ValueError):
        CusumDetector(0.0)


def test_false_alarm_lower_bound(commuting_pair):
    # CUSUM's mean time to false alarm is at least e^h
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    times = stop_times(t, 5.0, None, 1, 10**6, seed=2, n_trials=10_000, jobs=4)
    assert np.all(times > 0)
    assert times.mean() > math.exp(5.0)


def pair_summed_oracle(q1, p1, llr1, h, n_trials, seed):
    """Pre-change CUSUM on blocks of two copies, with single-copy outcomes
    drawn independently and their LLRs summed before each update."""
    rng = np.random.default_rng(seed)
    s = np.zeros(n_trials)
    stop = np.zeros(n_trials, dtype=np.int64)
    alive = np.ones(n_trials, dtype=bool)
    block = 0
    while alive.any():
        block += 1
        k = int(alive.sum())
        x = llr1[rng.choice(2, size=k, p=p1)] + llr1[rng.choice(2, size=k, p=p1)]
        s[alive] = np.maximum(0.0, s[alive] + x)
        hit = np.zeros(n_trials, dtype=bool)
        hit[alive] = s[alive] >= h
        stop[hit] = 2 * block
        alive &= ~hit
    return stop


def test_block_consistency_against_oracle(commuting_pair):
    sigma, rho = commuting_pair
    t1 = build_llr_table(sigma, rho, basis_povm(2))
    t2 = build_llr_table(sigma, rho, tensor_power_povm(basis_povm(2), 2), 2)
    n = 20_000
    engine = stop_times(t2, 3.0, None, 2, 10**6, seed=17, n_trials=n, jobs=4)
    oracle = pair_summed_oracle(t1.q, t1.p, t1.llr, 3.0, n, seed=99)
    assert np.all(engine % 2 == 0)
    assert stats.ks_2samp(engine, oracle).statistic < 0.02
