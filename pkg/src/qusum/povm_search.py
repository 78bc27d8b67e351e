"""Numerical maximization of the measured relative entropy over POVMs.

A POVM with m outcomes is parametrized by unconstrained complex matrices
A_1..A_m through M_i = S^-1/2 A_i^dag A_i S^-1/2, S = sum_j A_j^dag A_j,
which is complete by construction. The KL objective is climbed with
central-difference gradients, L-BFGS directions and backtracking line
search from several starts; block measurements run the same search on
tensor powers, warm-started from products of lower-order optima.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .entropy import measured_relative_entropy, quantum_relative_entropy
from .errors import BudgetExhausted, SingularNormalizer
from .measurement import Povm, stream
from .states import DensityMatrix, tensor_power

logger = logging.getLogger(__name__)

SINGULAR_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class PovmParam:
    factors: np.ndarray  # (m, d, d) complex

    def __post_init__(self):
        f = np.array(self.factors, dtype=complex)
        if f.ndim != 3 or f.shape[1] != f.shape[2]:
            raise ValueError(f"factors must have shape (m, d, d), got {f.shape}")
        if f.shape[0] < 2:
            raise ValueError("a searchable POVM needs at least 2 outcomes")
        if not np.all(np.isfinite(f)):
            raise ValueError("factors have non-finite entries")
        object.__setattr__(self, "factors", f)

    @property
    def dim(self) -> int:
        return self.factors.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.factors.shape[0]

    def to_vector(self) -> np.ndarray:
        flat = self.factors.ravel()
        return np.concatenate([flat.real, flat.imag])

    @classmethod
    def from_vector(cls, theta: np.ndarray, m: int, d: int) -> "PovmParam":
        return cls(_unpack(theta[None], m, d)[0])

    @classmethod
    def from_povm(cls, povm: Povm, n_outcomes: Optional[int] = None) -> "PovmParam":
        """A_i = M_i^1/2, padded with zero factors up to ``n_outcomes``."""
        roots = [linalg.sqrt_psd(e) for e in povm.elements]
        m = max(n_outcomes or 0, len(roots), 2)
        f = np.zeros((m, povm.dim, povm.dim), dtype=complex)
        f[: len(roots)] = roots
        return cls(f)


def _unpack(theta: np.ndarray, m: int, d: int) -> np.ndarray:
    half = theta.shape[1] // 2
    return (theta[:, :half] + 1j * theta[:, half:]).reshape(-1, m, d, d)


def _normalized_factors(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """B_i = A_i S^-1/2 for a batch of factor sets ``a`` of shape (..., m, d, d).

    With the stacked factors A = U diag(s) V^dag, A S^-1/2 = U V^dag, so the
    B_i stack to an isometry and sum_i B_i^dag B_i = I holds to roundoff even
    when S is badly conditioned. Also returns a mask of singular normalizers.
    """
    *batch, m, d, _ = a.shape
    stacked = a.reshape(*batch, m * d, d)
    u, sv, vh = np.linalg.svd(stacked, full_matrices=False)
    singular = (sv[..., -1] ** 2 <= SINGULAR_RATIO * sv[..., 0] ** 2) | (sv[..., 0] <= 0)
    return (u @ vh).reshape(*batch, m, d, d), singular


def realize_povm(p: PovmParam) -> Povm:
    """M_i = S^-1/2 A_i^dag A_i S^-1/2 with S = sum_j A_j^dag A_j."""
    b, singular = _normalized_factors(p.factors)
    if singular:
        raise SingularNormalizer("normalizer sum A_i^dag A_i is numerically singular")
    return Povm(linalg.hermitize(linalg.dagger(b) @ b))


@dataclass
class SearchConfig:
    restarts: int = 8
    n_outcomes: Optional[int] = None  # default d**2
    seed: int = 0
    max_iter: int = 5000
    rel_tol: float = 1e-8
    window: int = 20
    fd_step: float = 1e-6
    memory: int = 10
    jobs: int = 1
    strict: bool = False
    max_batch_elements: int = 2_000_000


@dataclass
class SearchResult:
    best_povm: Povm
    best_value: float
    per_restart_values: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    converged: bool = True
    start_labels: list = field(default_factory=list)


class _Objective:
    """Batched KL objective over flattened parameter vectors."""

    def __init__(self, sigma: np.ndarray, rho: np.ndarray, m: int, d: int, allow_infinite: bool, max_elems: int):
        self.sigma, self.rho = sigma, rho
        self.m, self.d = m, d
        self.allow_infinite = allow_infinite
        self.chunk = max(1, max_elems // (m * d * d))

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        return np.concatenate([self._eval(theta[i : i + self.chunk]) for i in range(0, theta.shape[0], self.chunk)])

    def _eval(self, theta: np.ndarray) -> np.ndarray:
        b, singular = _normalized_factors(_unpack(theta, self.m, self.d))
        # p_i = Tr(B_i rho B_i^dag)
        p = np.clip(np.real(np.sum((b @ self.rho) * b.conj(), axis=(2, 3))), 0.0, None)
        q = np.clip(np.real(np.sum((b @ self.sigma) * b.conj(), axis=(2, 3))), 0.0, None)
        broken = np.any((q > 0) & (p <= 0), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(q > 0, q * np.log(q / np.where(p > 0, p, 1.0)), 0.0)
        val = terms.sum(axis=1)
        val = np.where(broken, math.inf if self.allow_infinite else -math.inf, val)
        return np.where(singular, -math.inf, val)

    def gradient(self, theta: np.ndarray, step: float) -> np.ndarray:
        n = theta.size
        h = step * np.maximum(1.0, np.abs(theta))
        pts = np.repeat(theta[None], 2 * n, axis=0)
        idx = np.arange(n)
        pts[idx, idx] += h
        pts[n + idx, idx] -= h
        f = self(pts)
        g = (f[:n] - f[n:]) / (2 * h)
        return np.where(np.isfinite(g), g, 0.0)


def _lbfgs_direction(g: np.ndarray, s_hist: list, y_hist: list) -> np.ndarray:
    # two-loop recursion for ascent (minimizing -f)
    q = -g.copy()
    alphas = []
    for s, y in reversed(list(zip(s_hist, y_hist))):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / np.dot(y, s)
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _ascend(obj: _Objective, theta: np.ndarray, cfg: SearchConfig) -> tuple[np.ndarray, float, int, bool]:
    f = float(obj(theta)[0])
    if not np.isfinite(f):
        return theta, f, 0, True
    history = [f]
    s_hist: list = []
    y_hist: list = []
    g = obj.gradient(theta, cfg.fd_step)
    for it in range(1, cfg.max_iter + 1):
        d = _lbfgs_direction(g, s_hist, y_hist)
        slope = float(np.dot(g, d))
        if slope <= 0:
            s_hist.clear()
            y_hist.clear()
            d, slope = g, float(np.dot(g, g))
        if slope == 0.0:
            return theta, f, it, True
        t = 1.0 if s_hist else min(1.0, 1.0 / math.sqrt(slope))
        while True:
            cand = theta + t * d
            fc = float(obj(cand)[0])
            if np.isfinite(fc) and fc >= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t * np.max(np.abs(d)) < 1e-15 * max(1.0, np.max(np.abs(theta))):
                return theta, f, it, True
        g_new = obj.gradient(cand, cfg.fd_step)
        s_vec, y_vec = cand - theta, g - g_new  # y for the minimized -f
        if np.dot(s_vec, y_vec) > 1e-12 * np.dot(y_vec, y_vec):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        theta, f, g = cand, fc, g_new
        history.append(f)
        if len(history) > cfg.window:
            gain = history[-1] - history[-1 - cfg.window]
            if gain <= cfg.rel_tol * max(abs(f), 1e-300):
                return theta, f, it, True
    return theta, f, cfg.max_iter, False


def _restricted_log_difference(sigma: DensityMatrix, rho: DensityMatrix) -> np.ndarray:
    log_s, _ = linalg.log_on_support(sigma.matrix)
    log_r, _ = linalg.log_on_support(rho.matrix)
    p = linalg.support_projector(rho.matrix)
    return linalg.hermitize(p @ (log_s - log_r) @ p)


def _projective_start(matrix: np.ndarray, m: int) -> np.ndarray:
    u = linalg.eig_hermitian(matrix).eigenvectors
    d = u.shape[0]
    f = np.zeros((m, d, d), dtype=complex)
    for i in range(d):
        f[i] = np.outer(u[:, i], u[:, i].conj())
    return f


def _support_break_povm(sigma: DensityMatrix, rho: DensityMatrix) -> Povm:
    """Two-outcome test {P, I - P} with P the projector onto supp(rho)."""
    p = linalg.support_projector(rho.matrix)
    return Povm(np.array([p, np.eye(rho.dim) - p]))


def optimize_measurement(
    sigma: DensityMatrix,
    rho: DensityMatrix,
    cfg: Optional[SearchConfig] = None,
    warm_starts: Optional[list] = None,
) -> SearchResult:
    """Search for the POVM maximizing D^M(sigma||rho).

    Starts: eigenbases of rho, sigma and of P(ln sigma - ln rho)P with P the
    support projector of rho, any ``warm_starts`` POVMs, then
    ``cfg.restarts`` random factor sets drawn from ``stream(cfg.seed, k)``.
    """
    cfg = cfg or SearchConfig()
    d = rho.dim
    ceiling = quantum_relative_entropy(sigma, rho)
    if not ceiling.support_ok:
        povm = _support_break_povm(sigma, rho)
        value = measured_relative_entropy(sigma, rho, povm)
        return SearchResult(povm, value, [value], [0], True, ["support-break"])

    m = cfg.n_outcomes or d * d
    obj = _Objective(sigma.matrix, rho.matrix, m, d, allow_infinite=False, max_elems=cfg.max_batch_elements)
    starts = [
        ("eig-rho", _projective_start(rho.matrix, m)),
        ("eig-sigma", _projective_start(sigma.matrix, m)),
        ("eig-logdiff", _projective_start(_restricted_log_difference(sigma, rho), m)),
    ]
    for k, w in enumerate(warm_starts or []):
        if w.n_outcomes <= m:
            starts.append((f"warm-{k}", PovmParam.from_povm(w, m).factors))
    for k in range(cfg.restarts):
        g = stream(cfg.seed, k)
        starts.append((f"random-{k}", g.normal(size=(m, d, d)) + 1j * g.normal(size=(m, d, d))))

    def run(start):
        theta0 = PovmParam(start).to_vector()
        return _ascend(obj, theta0, cfg)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            outcomes = list(pool.map(run, [s for _, s in starts]))
    else:
        outcomes = [run(s) for _, s in starts]

    values, iters, flags, povms = [], [], [], []
    for theta, _, it, conv in outcomes:
        povm = realize_povm(PovmParam.from_vector(theta, m, d))
        values.append(measured_relative_entropy(sigma, rho, povm))
        povms.append(povm)
        iters.append(it)
        flags.append(conv)
    best = int(np.argmax(values))  # first maximum wins ties
    result = SearchResult(povms[best], values[best], values, iters, flags[best], [lab for lab, _ in starts])
    logger.debug("povm search d=%d m=%d best=%.10g from %s", d, m, values[best], starts[best][0])
    if cfg.strict and not result.converged:
        raise BudgetExhausted(f"best start did not converge within {cfg.max_iter} iterations", result)
    return result


def block_measurement_sweep(
    sigma: DensityMatrix, rho: DensityMatrix, l_max: int, cfg: Optional[SearchConfig] = None
) -> list[tuple[int, float, SearchResult]]:
    """Optimize on sigma^(x)l vs rho^(x)l for l = 1..l_max.

    Each l > 1 is warm-started from (optimum at l-1) (x) (optimum at l=1), so
    the per-copy value cannot drop below the previous one. Returns
    ``(l, best_value / l, result)`` triples.
    """
    cfg = cfg or SearchConfig()
    linalg.check_dim(rho.dim**l_max)
    out = []
    first: Optional[Povm] = None
    prev: Optional[Povm] = None
    for l in range(1, l_max + 1):
        s_l, r_l = tensor_power(sigma, l), tensor_power(rho, l)
        warm = [prev.tensor(first)] if prev is not None else None
        res = optimize_measurement(s_l, r_l, cfg, warm_starts=warm)
        if first is None:
            first = res.best_povm
        prev = res.best_povm
        out.append((l, res.best_value / l, res))
    return out
