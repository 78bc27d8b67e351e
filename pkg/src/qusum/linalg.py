"""Dense Hermitian matrix kernel.

Spectral decomposition, functions of PSD matrices evaluated on their
support, support projectors and size-guarded Kronecker products. All
logarithms are natural.
"""

from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConvergenceFailure, DimensionOverflow, NotHermitian, NotPositive

HERMITICITY_TOL = 1e-12
NEGATIVE_CLAMP = 1e-10
RELATIVE_CUTOFF = 1e-12
MAX_DIM = 4096


class SpectralDecomposition(NamedTuple):
    """Eigenvalues in descending order with the matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def hermiticity_error(a: np.ndarray) -> float:
    """Relative Frobenius norm of the anti-Hermitian part."""
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - a.conj().T) / scale)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def eig_hermitian(a, tol: float = HERMITICITY_TOL) -> SpectralDecomposition:
    """Diagonalize a Hermitian matrix.

    Raises ``NotHermitian`` if the relative anti-Hermitian part exceeds
    ``tol``. The matrix is symmetrized before calling LAPACK so the result
    depends only on the Hermitian part.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"matrix is not square: {a.shape}")
    err = hermiticity_error(a)
    if err > tol:
        raise NotHermitian(f"relative hermiticity error {err:.3e} exceeds {tol:.1e}")
    try:
        w, v = np.linalg.eigh(hermitize(a))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return SpectralDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def psd_spectrum(a, clamp: float = NEGATIVE_CLAMP) -> SpectralDecomposition:
    """Spectral decomposition of a PSD matrix with small negatives set to zero."""
    dec = eig_hermitian(a)
    w = dec.eigenvalues
    if w.size and w[-1] < -clamp:
        raise NotPositive(f"minimum eigenvalue {w[-1]:.3e} below -{clamp:.0e}")
    return SpectralDecomposition(np.clip(w, 0.0, None), dec.eigenvectors)


def is_diagonal(a: np.ndarray) -> bool:
    return not np.any(a[~np.eye(a.shape[0], dtype=bool)])


def default_cutoff(a: np.ndarray, eigenvalues: np.ndarray) -> float:
    """Kernel threshold: exact zero test for diagonal input, else 1e-12 * max eigenvalue.

    Eigenvalues of a diagonal matrix are its entries, with no roundoff, so
    the geometric tails of truncated thermal states stay in the support.
    """
    if is_diagonal(a):
        return 0.0
    top = float(eigenvalues[0]) if eigenvalues.size else 0.0
    return RELATIVE_CUTOFF * max(top, 0.0)


def support_mask(eigenvalues: np.ndarray, support_cutoff: float) -> np.ndarray:
    return eigenvalues > support_cutoff


def apply_on_support(
    a, func: Callable[[np.ndarray], np.ndarray], support_cutoff: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``func`` on the eigenvalues above the cutoff, zero elsewhere.

    Returns the resulting matrix and the boolean support mask over the
    (descending) eigenvalues.
    """
    a = as_matrix(a)
    dec = psd_spectrum(a)
    if support_cutoff is None:
        support_cutoff = default_cutoff(a, dec.eigenvalues)
    mask = support_mask(dec.eigenvalues, support_cutoff)
    u = dec.eigenvectors[:, mask]
    f = func(dec.eigenvalues[mask])
    return (u * f) @ u.conj().T, mask


def log_on_support(a, support_cutoff: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Natural logarithm restricted to the support; the kernel maps to 0."""
    return apply_on_support(a, np.log, support_cutoff)


def sqrt_psd(a) -> np.ndarray:
    dec = psd_spectrum(a)
    u = dec.eigenvectors
    return (u * np.sqrt(dec.eigenvalues)) @ u.conj().T


def support_projector(a, support_cutoff: Optional[float] = None) -> np.ndarray:
    """Orthogonal projector onto the span of eigenvectors above the cutoff."""
    a = as_matrix(a)
    dec = psd_spectrum(a)
    if support_cutoff is None:
        support_cutoff = default_cutoff(a, dec.eigenvalues)
    u = dec.eigenvectors[:, support_mask(dec.eigenvalues, support_cutoff)]
    return u @ u.conj().T


def check_dim(dim: int, max_dim: int = MAX_DIM) -> None:
    if dim > max_dim:
        raise DimensionOverflow(f"dimension {dim} exceeds max_dim={max_dim}")


def kron(a, b, max_dim: int = MAX_DIM) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    check_dim(a.shape[0] * b.shape[0], max_dim)
    check_dim(a.shape[1] * b.shape[1], max_dim)
    return np.kron(a, b)


def kron_power(a, n: int, max_dim: int = MAX_DIM) -> np.ndarray:
    if n < 1:
        raise ValueError("tensor power must be >= 1")
    a = np.asarray(a, dtype=complex)
    check_dim(a.shape[0] ** n, max_dim)
    out = a
    for _ in range(n - 1):
        out = np.kron(out, a)
    return out
