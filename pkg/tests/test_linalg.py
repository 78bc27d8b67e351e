import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qusum import linalg
from qusum.errors import DimensionOverflow, NotHermitian, NotPositive


def test_eig_identity():
    dec = linalg.eig_hermitian(np.eye(2))
    np.testing.assert_allclose(dec.eigenvalues, [1, 1])
    np.testing.assert_allclose(dec.eigenvectors.conj().T @ dec.eigenvectors, np.eye(2), atol=1e-14)


def test_eig_diagonal_descending():
    dec = linalg.eig_hermitian(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(dec.eigenvalues, [3, 1])
    np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(2), atol=1e-14)


def test_eig_pauli_x():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    dec = linalg.eig_hermitian(x)
    np.testing.assert_allclose(dec.eigenvalues, [1, -1], atol=1e-14)
    plus = dec.eigenvectors[:, 0]
    np.testing.assert_allclose(np.abs(plus), [2**-0.5, 2**-0.5], atol=1e-14)
    np.testing.assert_allclose(dec.reconstruct(), x, atol=1e-14)


def test_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        linalg.eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_psd_spectrum_clamps_and_rejects():
    dec = linalg.psd_spectrum(np.diag([1.0, -1e-12]))
    assert dec.eigenvalues.min() == 0.0
    with pytest.raises(NotPositive):
        linalg.psd_spectrum(np.diag([1.0, -1e-3]))


def test_log_on_support():
    log, mask = linalg.log_on_support(np.eye(2))
    np.testing.assert_allclose(log, np.zeros((2, 2)), atol=1e-15)
    log, _ = linalg.log_on_support(np.diag([np.e, np.e**2]))
    np.testing.assert_allclose(log, np.diag([1.0, 2.0]), atol=1e-14)
    log, mask = linalg.log_on_support(np.diag([0.5, 0.5, 0.0]))
    np.testing.assert_allclose(log, np.diag([np.log(0.5), np.log(0.5), 0.0]), atol=1e-14)
    assert mask.tolist() == [True, True, False]


def test_support_projector():
    np.testing.assert_allclose(linalg.support_projector(np.eye(3) / 3), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(linalg.support_projector(np.diag([1.0, 0, 0])), np.diag([1.0, 0, 0]), atol=1e-14)
    np.testing.assert_allclose(linalg.support_projector(np.diag([0.6, 0.4, 0])), np.diag([1.0, 1, 0]), atol=1e-14)


def test_tiny_diagonal_eigenvalues_stay_in_support():
    # exactly diagonal inputs use an exact-zero test, so 1e-15 is support
    _, mask = linalg.log_on_support(np.diag([1.0, 1e-15]))
    assert mask.all()


def test_kron():
    np.testing.assert_allclose(linalg.kron(np.eye(2), np.eye(2)), np.eye(4))
    np.testing.assert_allclose(linalg.kron(np.diag([1, 2]), np.diag([3, 4])), np.diag([3, 4, 6, 8]))
    r = np.diag([0.9, 0.1])
    np.testing.assert_allclose(linalg.kron(r, r), np.diag([0.81, 0.09, 0.09, 0.01]), atol=1e-15)


def test_kron_overflow():
    with pytest.raises(DimensionOverflow):
        linalg.kron_power(np.eye(2), 13)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_reconstruction_property(d, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    a = g + g.conj().T
    dec = linalg.eig_hermitian(a)
    assert np.all(np.diff(dec.eigenvalues) <= 1e-12)
    np.testing.assert_allclose(dec.reconstruct(), a, atol=1e-10 * np.abs(a).max())
