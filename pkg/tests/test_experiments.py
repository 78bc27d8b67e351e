import csv
import io
import math

import numpy as np
import pytest

from conftest import ket_dm
from qusum.detection import build_llr_table
from qusum.errors import InsufficientSpread, ZeroDivergence
from qusum.experiments import (
    CSV_HEADER,
    TradeoffConfig,
    TradeoffResult,
    TradeoffRow,
    compare_at_matched_tfa,
    delay_at_tfa,
    delay_from_table,
    fit_slope,
    pushforward_instance,
    tfa_from_table,
    tradeoff_csv,
    tradeoff_experiment,
    verify_compression_convergence,
    verify_dpi,
    verify_lemma3,
    verify_optimality_chain,
)
from qusum.measurement import (
    KrausChannel,
    Povm,
    basis_povm,
    compression_channel,
    identity_channel,
    random_density_matrix,
    random_unitary,
    stream,
    unitary_channel,
)
from qusum.plotting import plot_tradeoff
from qusum.povm_search import SearchConfig
from qusum.states import DensityMatrix

SMALL = dict(n_points=5, tfa_range=(30, 1e4), n_trials_delay=2000, n_trials_tfa=500, seed=4, jobs=4)


@pytest.fixture(scope="module")
def small_result():
    sigma, rho = DensityMatrix(np.diag([0.9, 0.1])), DensityMatrix(np.diag([0.5, 0.5]))
    return tradeoff_experiment(TradeoffConfig(sigma, rho, basis_povm(2), label="small", **SMALL))


def test_equal_laws_are_censored(commuting_pair):
    _, rho = commuting_pair
    t = build_llr_table(rho, rho, basis_povm(2))
    est = tfa_from_table(t, 1, 2.0, 100, horizon=1000, seed=0)
    assert est.censored == 100 and est.is_lower_bound
    assert est.mean >= 1000
    with pytest.raises(ZeroDivergence):
        delay_from_table(t, 1, 2.0, 100, horizon=1000)


def test_tiny_threshold_geometric(commuting_pair):
    # with h -> 0 the run stops at the first positive LLR
    sigma, rho = commuting_pair
    t = build_llr_table(sigma, rho, basis_povm(2))
    delay = delay_from_table(t, 1, 1e-9, 20_000, seed=1, jobs=4)
    tfa = tfa_from_table(t, 1, 1e-9, 20_000, seed=1, jobs=4)
    assert delay.mean == pytest.approx(1 / 0.9, abs=4 * delay.stderr)
    assert tfa.mean == pytest.approx(2.0, abs=4 * tfa.stderr)


def test_too_few_trials(commuting_pair):
    sigma, rho = commuting_pair
    with pytest.raises(ValueError):
        tfa_from_table(build_llr_table(sigma, rho, basis_povm(2)), 1, 1.0, 10)


def rows_on_line(slope, intercept, tfas, censored=0):
    return [TradeoffRow(1.0, t, 1.0, intercept + slope * math.log(t), 0.1, 100, censored) for t in tfas]


def test_fit_slope_exact_line():
    fit = fit_slope(rows_on_line(2.5, 1.0, [1e2, 1e3, 1e4, 1e5]), 2.0, 1.5)
    assert fit.slope == pytest.approx(2.5) and fit.intercept == pytest.approx(1.0)
    assert fit.r_squared == pytest.approx(1.0) and fit.ratio_to_theory == pytest.approx(1.25)


def test_fit_slope_spread_checks():
    with pytest.raises(InsufficientSpread):
        fit_slope(rows_on_line(1, 0, [1e2, 2e2, 5e2]), 1, 1)
    with pytest.raises(InsufficientSpread):
        fit_slope(rows_on_line(1, 0, [1e2, 1e5]), 1, 1)
    censored = rows_on_line(1, 0, [1e2, 1e3, 1e4], censored=1)
    with pytest.raises(InsufficientSpread):
        fit_slope(censored, 1, 1)


def test_delay_interpolation():
    rows = rows_on_line(2.0, 0.0, [1e2, 1e4])
    res = TradeoffResult(rows, None, 0.5, 0.5)
    d, _ = delay_at_tfa(res, 1e3)
    assert d == pytest.approx(2.0 * math.log(1e3))
    with pytest.raises(ValueError):
        delay_at_tfa(res, 10.0)


def test_small_tradeoff(small_result):
    fit = small_result.fit
    assert 0.85 < fit.ratio_to_theory < 1.15
    assert fit.theory_slope == pytest.approx(1 / 0.3680642071684971)
    tfas = [r.tfa_mean for r in small_result.rows]
    assert tfas == sorted(tfas)


def test_csv_format(small_result):
    text = tradeoff_csv(small_result)
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    body = [ln for ln in lines if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert len(rows) == 5
    assert float(rows[0]["tfa_mean"]) == small_result.rows[0].tfa_mean
    footer = dict(ln[2:].split("=", 1) for ln in lines if ln.startswith("# ") and "=" in ln)
    assert float(footer["slope"]) == small_result.fit.slope
    assert int(footer["block_l"]) == 1


def test_svg_is_deterministic(small_result, tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_tradeoff([small_result], a)
    plot_tradeoff([small_result], b)
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()


def test_matched_tfa_self_comparison(small_result):
    cmp = compare_at_matched_tfa(small_result, small_result)
    assert cmp["delay_a"] == cmp["delay_b"]


def test_pushforward_suite_variants():
    assert verify_lemma3(20, seed=1).passed
    rng = stream(0, 5)
    ident = []
    for _ in range(10):
        _, m, sigma, rho = pushforward_instance(rng)
        s2, r2 = random_density_matrix(m.dim, rng), random_density_matrix(m.dim, rng)
        ident.append((identity_channel(m.dim), m, s2, r2))
    rep = verify_lemma3(instances=ident)
    assert rep.passed and rep.max_discrepancy == 0.0
    # rho = |0><0|, sigma = |+><+| through a unitary, measured in the rotated basis
    u = random_unitary(2, rng)
    rotated = Povm(u @ basis_povm(2).elements @ u.conj().T)
    rep = verify_lemma3(instances=[(unitary_channel(u), rotated, ket_dm(1, 1), ket_dm(1, 0))])
    assert all(math.isinf(l) and math.isinf(r) for l, r in rep.details)
    assert rep.passed
    # random distinct pure states: both sides agree whether finite or not
    assert verify_lemma3(instances=[pushforward_instance(rng, support_violating=True) for _ in range(5)]).passed


def test_dpi_suite():
    rep = verify_dpi(50, seed=3)
    assert rep.passed and rep.max_discrepancy < 1e-9


def test_compression_two_levels_is_identity():
    rng = np.random.default_rng(0)
    rep = verify_compression_convergence(random_density_matrix(2, rng), random_density_matrix(2, rng))
    assert rep.passed and rep.n_instances == 1


CHAIN = dict(n_points=5, tfa_range=(30, 1e4), n_trials_delay=3000, n_trials_tfa=600, seed=2, jobs=4)


def test_optimality_chain_identity():
    rng = np.random.default_rng(8)
    sigma, rho = random_density_matrix(2, rng), random_density_matrix(2, rng)
    cfg = TradeoffConfig(sigma, rho, basis_povm(2), **CHAIN)
    rep = verify_optimality_chain(sigma, rho, identity_channel(2), cfg, SearchConfig(restarts=1))
    assert rep.passed
    assert abs(rep.direct.fit.slope - rep.reduced.fit.slope) <= rep.tolerance


def test_optimality_chain_qutrit_to_qubit():
    rng = np.random.default_rng(21)
    sigma, rho = random_density_matrix(3, rng), random_density_matrix(3, rng)
    cfg = TradeoffConfig(sigma, rho, basis_povm(3), **CHAIN)
    rep = verify_optimality_chain(sigma, rho, compression_channel(1, 3), cfg, SearchConfig(restarts=1))
    assert rep.passed
    assert rep.reduced_value <= rep.direct_value + 1e-9


def test_optimality_chain_collapsing_channel():
    # replaces every input with |0><0|
    ops = np.zeros((2, 2, 2), dtype=complex)
    ops[0, 0, 0] = ops[1, 0, 1] = 1.0
    sigma, rho = ket_dm(1, 1), DensityMatrix(np.eye(2) / 2)
    cfg = TradeoffConfig(sigma, rho, basis_povm(2), **CHAIN)
    with pytest.raises(ZeroDivergence):
        verify_optimality_chain(sigma, rho, KrausChannel(ops), cfg)
