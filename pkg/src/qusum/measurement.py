"""POVMs, Kraus channels, outcome sampling and seeded random streams.

Random streams are Philox generators keyed by ``(seed, *indices)``; the
counter of a stream is its draw position, so the k-th uniform drawn from
``stream(seed, trial)`` is the step-k draw of that trial no matter which
worker runs it or in what order.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .entropy import OutcomeDistribution
from .errors import BadDims, DimMismatch, InvalidChannel, InvalidPovm, NormalizationBroken
from .serialization import operator_list_from_json, operator_list_to_json, read_json, write_json
from .states import DensityMatrix

COMPLETENESS_TOL = 1e-9
PSD_TOL = 1e-10
# Tr(M_i rho) is only accurate to a few ulps; smaller values are treated as exact zeros
PROB_ROUNDOFF = 1e-14
TRACE_PRESERVATION_TOL = 1e-9


def stream(seed: int, *indices: int) -> np.random.Generator:
    """Independent counter-based generator for the index tuple ``(seed, *indices)``."""
    key = np.random.SeedSequence([int(seed), *map(int, indices)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _inv_sqrt_psd(s: np.ndarray) -> np.ndarray:
    dec = linalg.psd_spectrum(s)
    u = dec.eigenvectors
    return (u / np.sqrt(dec.eigenvalues)) @ u.conj().T


@dataclass(frozen=True, eq=False)
class Povm:
    """Finite POVM stored as an ``(m, d, d)`` array of PSD elements.

    Completeness deviations up to 1e-9 are repaired by the symmetric
    correction M_i -> S^-1/2 M_i S^-1/2 with S = sum_j M_j; anything larger
    raises ``InvalidPovm``.
    """

    elements: np.ndarray

    def __post_init__(self):
        e = np.array(self.elements, dtype=complex)
        if e.ndim != 3 or e.shape[1] != e.shape[2] or e.shape[0] < 1:
            raise InvalidPovm(f"POVM elements must have shape (m, d, d), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise InvalidPovm("POVM has non-finite entries")
        herm = np.max(np.abs(e - linalg.dagger(e)))
        if herm > PSD_TOL:
            raise InvalidPovm(f"POVM element not Hermitian (error {herm:.2e})")
        e = linalg.hermitize(e)
        min_eig = float(np.min(np.linalg.eigvalsh(e)))
        if min_eig < -PSD_TOL:
            raise InvalidPovm(f"POVM element has eigenvalue {min_eig:.3e}")
        total = e.sum(axis=0)
        dev = float(np.max(np.abs(total - np.eye(e.shape[1]))))
        if dev > COMPLETENESS_TOL:
            raise InvalidPovm(f"POVM elements sum to identity only within {dev:.3e}")
        if dev > 1e-14:
            w = _inv_sqrt_psd(total)
            e = linalg.hermitize(w @ e @ w)
        e.setflags(write=False)
        object.__setattr__(self, "elements", e)

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.elements.shape[0]

    def __len__(self) -> int:
        return self.n_outcomes

    def tensor(self, other: "Povm", max_dim: int = linalg.MAX_DIM) -> "Povm":
        """Product POVM with outcome index ``i * len(other) + j``."""
        linalg.check_dim(self.dim * other.dim, max_dim)
        e = np.einsum("aij,bkl->abikjl", self.elements, other.elements)
        m = self.n_outcomes * other.n_outcomes
        d = self.dim * other.dim
        return Povm(e.reshape(m, d, d))

    def to_json(self) -> dict:
        return operator_list_to_json("elements", self.elements, self.dim)

    @classmethod
    def from_json(cls, obj: dict) -> "Povm":
        dim, ops = operator_list_from_json(obj, "elements")
        if any(op.shape != (dim, dim) for op in ops):
            raise InvalidPovm(f"POVM elements do not all have shape ({dim}, {dim})")
        return cls(np.array(ops))


def load_povm(path) -> Povm:
    return Povm.from_json(read_json(path))


def save_povm(path, m: Povm) -> None:
    write_json(path, m.to_json())


def basis_povm(dim: int) -> Povm:
    """Projective measurement in the computational (Fock) basis."""
    e = np.zeros((dim, dim, dim), dtype=complex)
    e[np.arange(dim), np.arange(dim), np.arange(dim)] = 1.0
    return Povm(e)


def eigenbasis_povm(a) -> Povm:
    """Projective measurement onto the eigenvectors of a Hermitian matrix."""
    u = linalg.eig_hermitian(a).eigenvectors
    return Povm(np.einsum("ia,ja->aij", u, u.conj()))


def trivial_povm(dim: int) -> Povm:
    return Povm(np.eye(dim, dtype=complex)[None])


def noisy_basis_povm(dim: int, noise: float) -> Povm:
    """Basis projectors mixed with the uninformative measurement: (1-t)|i><i| + t I/d."""
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must lie in [0, 1], got {noise}")
    b = basis_povm(dim).elements
    return Povm((1.0 - noise) * b + noise * np.eye(dim)[None] / dim)


def tensor_power_povm(m: Povm, l: int, max_dim: int = linalg.MAX_DIM) -> Povm:
    out = m
    for _ in range(l - 1):
        out = out.tensor(m, max_dim)
    return out


def induced_distribution(m: Povm, rho: DensityMatrix) -> OutcomeDistribution:
    """Outcome law p_i = Re Tr(M_i rho), with roundoff-sized values set to zero."""
    if m.dim != rho.dim:
        raise DimMismatch(f"POVM acts on dim {m.dim}, state has dim {rho.dim}")
    # Tr(M rho) = sum_jk M_jk rho_kj
    p = np.real(np.einsum("ajk,kj->a", m.elements, rho.matrix))
    p = np.where(p > PROB_ROUNDOFF, p, 0.0)
    total = p.sum()
    if abs(total - 1.0) > 1e-6:
        raise NormalizationBroken(f"outcome probabilities sum to {total:.12g}")
    return OutcomeDistribution(p / total)


def sample_outcome(dist: OutcomeDistribution, rng: np.random.Generator) -> int:
    """Draw one outcome index by inverse CDF from a single uniform."""
    cdf = np.cumsum(dist.probs)
    return cdf_lookup(cdf, rng.random())


def cdf_lookup(cdf: np.ndarray, u: float) -> int:
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, cdf.size - 1)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Trace-preserving CP map given by Kraus operators of shape ``(out, in)``."""

    kraus_ops: np.ndarray

    def __post_init__(self):
        k = np.array(self.kraus_ops, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] < 1:
            raise InvalidChannel(f"Kraus operators must have shape (k, out, in), got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise InvalidChannel("Kraus operators have non-finite entries")
        gram = np.einsum("kji,kjl->il", k.conj(), k)
        dev = float(np.max(np.abs(gram - np.eye(k.shape[2]))))
        if dev > TRACE_PRESERVATION_TOL:
            raise InvalidChannel(f"sum K^dag K deviates from identity by {dev:.3e}")
        k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", k)

    @property
    def in_dim(self) -> int:
        return self.kraus_ops.shape[2]

    @property
    def out_dim(self) -> int:
        return self.kraus_ops.shape[1]

    def to_json(self) -> dict:
        out = operator_list_to_json("kraus", self.kraus_ops, self.in_dim)
        out["out_dim"] = self.out_dim
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "KrausChannel":
        _, ops = operator_list_from_json(obj, "kraus")
        if len({op.shape for op in ops}) != 1:
            raise InvalidChannel("Kraus operators have inconsistent shapes")
        return cls(np.array(ops))


def load_channel(path) -> KrausChannel:
    return KrausChannel.from_json(read_json(path))


def identity_channel(dim: int) -> KrausChannel:
    return KrausChannel(np.eye(dim, dtype=complex)[None])


def unitary_channel(u) -> KrausChannel:
    return KrausChannel(np.asarray(u, dtype=complex)[None])


def depolarizing_channel(p: float) -> KrausChannel:
    """Qubit depolarizing map rho -> (1 - p) rho + p I/2."""
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]])
    z = np.diag([1.0, -1.0]).astype(complex)
    i2 = np.eye(2, dtype=complex)
    a = np.sqrt(1 - 3 * p / 4)
    b = np.sqrt(p / 4)
    return KrausChannel(np.array([a * i2, b * x, b * y, b * z]))


def apply_channel(ch: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    if ch.in_dim != rho.dim:
        raise DimMismatch(f"channel input dim {ch.in_dim}, state dim {rho.dim}")
    k = ch.kraus_ops
    out = np.einsum("kij,jl,kml->im", k, rho.matrix, k.conj())
    return DensityMatrix(linalg.hermitize(out), rho.trace_deficit, rho.label)


def pushforward_povm(ch: KrausChannel, m: Povm) -> Povm:
    """Pull a POVM on the channel output back through the dual map: sum_k K^dag M_i K."""
    if m.dim != ch.out_dim:
        raise DimMismatch(f"POVM dim {m.dim} != channel output dim {ch.out_dim}")
    k = ch.kraus_ops
    e = np.einsum("kji,ajl,klm->aim", k.conj(), m.elements, k)
    return Povm(e)


def compression_channel(n: int, d: int) -> KrausChannel:
    """Map dim ``d`` onto levels 0..n, dumping levels above ``n`` into level n.

    Levels 0..n pass through coherently and level n doubles as the sink,
    which receives the population (but no coherence) of levels n+1..d-1.
    For n = d-1 the map is the identity, and each member factors through
    the next one (ch_n = ch_n o ch_{n+1}), so relative entropies of the
    compressed pair are nondecreasing in n.
    """
    if not 1 <= n < d:
        raise BadDims(f"compression needs 1 <= n < d, got n={n}, d={d}")
    ops = np.zeros((d - n, n + 1, d), dtype=complex)
    ops[0, np.arange(n + 1), np.arange(n + 1)] = 1.0
    for k, j in enumerate(range(n + 1, d), start=1):
        ops[k, n, j] = 1.0
    return KrausChannel(ops)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre-distributed state of the given rank (full rank by default)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(linalg.hermitize(m / np.trace(m).real))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(in_dim: int, out_dim: int, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Channel from a random isometry C^in -> C^out (x) C^k.

    ``n_kraus`` is raised to ceil(in/out) when needed for an isometry to exist.
    """
    n_kraus = max(n_kraus, -(-in_dim // out_dim))
    z = rng.normal(size=(out_dim * n_kraus, in_dim)) + 1j * rng.normal(size=(out_dim * n_kraus, in_dim))
    v, _ = np.linalg.qr(z)
    return KrausChannel(v.reshape(n_kraus, out_dim, in_dim))


def random_povm(dim: int, n_outcomes: int, rng: np.random.Generator) -> Povm:
    a = rng.normal(size=(n_outcomes, dim, dim)) + 1j * rng.normal(size=(n_outcomes, dim, dim))
    e = linalg.dagger(a) @ a
    w = _inv_sqrt_psd(e.sum(axis=0))
    return Povm(w @ e @ w)


def parse_povm(text: str, dim: int, l: int = 1) -> Povm:
    """Named presets (``basis``, ``trivial``, ``noisy:<t>``) or a JSON file path.

    Presets are built on one copy and tensored ``l`` times.
    """
    if text == "basis":
        return tensor_power_povm(basis_povm(dim), l)
    if text == "trivial":
        return trivial_povm(dim**l)
    if text.startswith("noisy:"):
        return tensor_power_povm(noisy_basis_povm(dim, float(text.split(":", 1)[1])), l)
    m = load_povm(text)
    if m.dim != dim**l:
        raise DimMismatch(f"POVM file acts on dim {m.dim}, expected {dim ** l}")
    return m


def povm_from_sequence(ops: Sequence) -> Povm:
    return Povm(np.array(ops))
