"""Quantum relative entropy, classical KL divergence and measured relative
entropy, all in nats."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import linalg
from .errors import DimMismatch, LengthMismatch, NormalizationBroken
from .states import DensityMatrix

SUPPORT_LEAK_TOL = 1e-9
PROB_FLOOR = 1e-300
PROB_NEGATIVE_CLAMP = 1e-12
PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RelEntResult:
    value: float
    support_ok: bool
    truncation_budget: float = 0.0
    support_leak: float = 0.0

    @property
    def finite(self) -> bool:
        return self.support_ok

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    probs: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError(f"probability vector must be 1-D and nonempty, got shape {p.shape}")
        if np.any(p < -PROB_NEGATIVE_CLAMP) or not np.all(np.isfinite(p)):
            raise NormalizationBroken(f"probabilities below -{PROB_NEGATIVE_CLAMP:g}: {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise NormalizationBroken(f"probabilities sum to {p.sum():.12g}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(range(p.size)))

    def __len__(self) -> int:
        return self.probs.size


Distribution = Union[OutcomeDistribution, Sequence[float], np.ndarray]


def _probs(d: Distribution) -> np.ndarray:
    if isinstance(d, OutcomeDistribution):
        return d.probs
    return OutcomeDistribution(d).probs


def kl_divergence(q: Distribution, p: Distribution, prob_floor: float = PROB_FLOOR) -> float:
    """D(q||p) = sum q_i ln(q_i/p_i) with 0 ln 0 = 0; +inf when q_i > 0 = p_i."""
    q, p = _probs(q), _probs(p)
    if q.shape != p.shape:
        raise LengthMismatch(f"distributions of length {q.size} and {p.size}")
    active = q > 0
    if np.any(p[active] < prob_floor):
        return math.inf
    qa, pa = q[active], p[active]
    return max(0.0, float(np.sum(qa * np.log(qa / pa))))


def _check_pair(sigma: DensityMatrix, rho: DensityMatrix) -> None:
    if sigma.dim != rho.dim:
        raise DimMismatch(f"states have dims {sigma.dim} and {rho.dim}")


def quantum_relative_entropy(
    sigma: DensityMatrix,
    rho: DensityMatrix,
    support_leak_tol: float = SUPPORT_LEAK_TOL,
    support_cutoff: Optional[float] = None,
) -> RelEntResult:
    """D(sigma||rho) = Tr sigma (ln sigma - ln rho) evaluated on supports.

    The result is +inf when the sigma mass outside supp(rho) exceeds
    ``support_leak_tol``; otherwise that residual is ignored.
    """
    _check_pair(sigma, rho)
    budget = sigma.trace_deficit + rho.trace_deficit
    r = linalg.psd_spectrum(rho.matrix)
    cutoff = linalg.default_cutoff(rho.matrix, r.eigenvalues) if support_cutoff is None else support_cutoff
    mask = linalg.support_mask(r.eigenvalues, cutoff)
    v = r.eigenvectors
    # diagonal of sigma in the eigenbasis of rho
    weights = np.real(np.einsum("ij,ik,kj->j", v.conj(), sigma.matrix, v))
    leak = float(np.sum(weights[~mask]))
    if leak > support_leak_tol:
        return RelEntResult(math.inf, False, budget, leak)
    s = linalg.psd_spectrum(sigma.matrix).eigenvalues
    s = s[s > 0]
    neg_entropy = float(np.sum(s * np.log(s)))
    cross = float(np.sum(weights[mask] * np.log(r.eigenvalues[mask])))
    return RelEntResult(max(0.0, neg_entropy - cross), True, budget, max(leak, 0.0))


def relative_entropy(sigma: DensityMatrix, rho: DensityMatrix) -> float:
    return quantum_relative_entropy(sigma, rho).value


def measured_relative_entropy(sigma: DensityMatrix, rho: DensityMatrix, m) -> float:
    """KL divergence between the outcome laws the POVM ``m`` induces on sigma and rho."""
    from .measurement import induced_distribution

    _check_pair(sigma, rho)
    return kl_divergence(induced_distribution(m, sigma), induced_distribution(m, rho))
