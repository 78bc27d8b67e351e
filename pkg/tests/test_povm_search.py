import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ket_dm
from qusum.entropy import kl_divergence, measured_relative_entropy, quantum_relative_entropy
from qusum.errors import BudgetExhausted, SingularNormalizer
from qusum.measurement import random_density_matrix, random_povm
from qusum.povm_search import PovmParam, SearchConfig, block_measurement_sweep, optimize_measurement, realize_povm
from qusum.states import DensityMatrix

FAST = SearchConfig(restarts=2, seed=3)


def bloch_grid_max(sigma, rho, n=100):
    """Best two-outcome projective measurement over an n x n grid of Bloch angles."""
    best = 0.0
    for theta in np.linspace(0, math.pi, n):
        for phi in np.linspace(0, 2 * math.pi, n, endpoint=False):
            v = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
            proj = np.outer(v, v.conj())
            q0 = np.real(np.trace(proj @ sigma.matrix))
            p0 = np.real(np.trace(proj @ rho.matrix))
            best = max(best, kl_divergence([q0, 1 - q0], [p0, 1 - p0]))
    return best


def test_realize_symmetric_case():
    m = realize_povm(PovmParam(np.array([np.eye(2), np.eye(2)])))
    np.testing.assert_allclose(m.elements, [np.eye(2) / 2, np.eye(2) / 2], atol=1e-15)


def test_realize_rank_one_basis():
    f = np.zeros((3, 3, 3), dtype=complex)
    for i in range(3):
        f[i, 0, i] = 1.0
    m = realize_povm(PovmParam(f))
    for i in range(3):
        expected = np.zeros((3, 3))
        expected[i, i] = 1
        np.testing.assert_allclose(m.elements[i], expected, atol=1e-15)


def test_realize_singular():
    f = np.zeros((2, 2, 2), dtype=complex)
    f[0, 0, 0] = 1.0
    with pytest.raises(SingularNormalizer):
        realize_povm(PovmParam(f))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_roundtrip_full_rank(d, m, seed):
    povm = random_povm(d, m, np.random.default_rng(seed))
    back = realize_povm(PovmParam.from_povm(povm))
    np.testing.assert_allclose(back.elements, povm.elements, atol=1e-9)


def test_commuting_pair_reaches_kl(commuting_pair):
    sigma, rho = commuting_pair
    res = optimize_measurement(sigma, rho, FAST)
    assert res.best_value == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2), abs=1e-6)
    assert quantum_relative_entropy(sigma, rho).value - res.best_value < 1e-6


def test_identical_states_give_zero():
    rho = random_density_matrix(3, np.random.default_rng(2))
    res = optimize_measurement(rho, rho, FAST)
    assert abs(res.best_value) < 1e-9
    assert max(abs(v) for v in res.per_restart_values) < 1e-9


def test_bloch_brute_force():
    rho = DensityMatrix(np.eye(2) / 2)
    plus = ket_dm(1, 1).matrix
    sigma = DensityMatrix(0.7 * plus + 0.3 * np.diag([0.8, 0.2]))
    res = optimize_measurement(sigma, rho, FAST)
    grid = bloch_grid_max(sigma, rho)
    d = quantum_relative_entropy(sigma, rho).value
    assert res.best_value >= grid - 1e-6
    assert res.best_value <= d + 1e-9
    # rho = I/2 commutes with sigma, so the eigenbasis of sigma attains D
    assert res.best_value == pytest.approx(d, abs=1e-9)
    assert grid == pytest.approx(d, abs=1e-3)


def test_support_break_search():
    sigma, rho = ket_dm(1, 1), DensityMatrix(np.diag([1.0, 0.0]))
    res = optimize_measurement(sigma, rho, FAST)
    assert res.best_value == math.inf


def test_strict_budget(commuting_pair):
    sigma = DensityMatrix(0.6 * ket_dm(1, 0.4).matrix + 0.4 * np.eye(2) / 2)
    _, rho = commuting_pair
    with pytest.raises(BudgetExhausted) as exc:
        optimize_measurement(sigma, rho, SearchConfig(restarts=1, max_iter=1, strict=True))
    assert exc.value.result is not None


def test_result_independent_of_jobs():
    rng = np.random.default_rng(11)
    sigma, rho = random_density_matrix(2, rng), random_density_matrix(2, rng)
    a = optimize_measurement(sigma, rho, SearchConfig(restarts=3, seed=5, jobs=1))
    b = optimize_measurement(sigma, rho, SearchConfig(restarts=3, seed=5, jobs=3))
    assert a.per_restart_values == b.per_restart_values


def test_block_sweep_monotone():
    rng = np.random.default_rng(4)
    sigma, rho = random_density_matrix(2, rng), random_density_matrix(2, rng)
    sweep = block_measurement_sweep(sigma, rho, 2, SearchConfig(restarts=0, seed=1))
    (_, v1, _), (_, v2, r2) = sweep
    assert v2 >= v1 - 1e-6
    assert v2 <= quantum_relative_entropy(sigma, rho).value + 1e-9
    assert measured_relative_entropy(sigma, rho, sweep[0][2].best_povm) == pytest.approx(v1)
    assert r2.best_povm.dim == 4
