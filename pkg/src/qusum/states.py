"""Density matrices: direct input, Fock states, mixtures and single-mode
Gaussian states (thermal, coherent, squeezed vacuum) in a truncated Fock
basis.

Truncated states are renormalized to unit trace; the mass removed by the
cut is kept in ``trace_deficit``.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import special, stats

from . import linalg
from .errors import BadSpec, CutoffTooSmall
from .serialization import load_matrix_file

TAIL_TOL = 1e-10
TRACE_TOL = 1e-10

KINDS = ("thermal", "coherent", "squeezed_vacuum", "fock", "matrix_file", "mixture")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    trace_deficit: float = 0.0
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    @classmethod
    def from_matrix(cls, m, label: str = "", renormalize: bool = False) -> "DensityMatrix":
        """Build from a raw matrix, raising ``BadSpec`` if it is not a state."""
        m = linalg.as_matrix(m)
        if renormalize:
            m = m / np.trace(m).real
        report = validate(cls(m, 0.0, label))
        if not report.passed:
            raise BadSpec("not a density matrix: " + "; ".join(report.failures))
        return cls(linalg.hermitize(m), 0.0, label)


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_error: float
    min_eigenvalue: float
    trace_error: float
    trace_deficit: float
    failures: tuple = ()

    @property
    def passed(self) -> bool:
        return not self.failures


def validate(rho: DensityMatrix) -> ValidationReport:
    m = rho.matrix
    failures = []
    herm = linalg.hermiticity_error(m) if m.shape[0] == m.shape[1] else math.inf
    if herm > 1e-12:
        failures.append(f"hermiticity error {herm:.3e}")
    if math.isfinite(herm):
        min_eig = float(np.linalg.eigvalsh(linalg.hermitize(m))[0])
    else:
        min_eig = math.nan
    if min_eig < -linalg.NEGATIVE_CLAMP:
        failures.append(f"negativity: min eigenvalue {min_eig:.3e}")
    trace_error = abs(float(np.trace(m).real) - 1.0)
    if trace_error > TRACE_TOL:
        failures.append(f"trace error {trace_error:.3g}")
    if rho.trace_deficit < 0:
        failures.append(f"negative trace deficit {rho.trace_deficit:.3g}")
    return ValidationReport(herm, min_eig, trace_error, rho.trace_deficit, tuple(failures))


# -- specifications ----------------------------------------------------------


@dataclass(frozen=True)
class StateSpec:
    kind: str
    params: dict = field(default_factory=dict)
    fock_cutoff: Union[int, str] = "auto"
    tail_tol: float = TAIL_TOL
    components: tuple = ()  # (weight, StateSpec) pairs for mixtures

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown state kind {self.kind!r}")
        if self.fock_cutoff != "auto":
            if not isinstance(self.fock_cutoff, (int, np.integer)) or self.fock_cutoff < 1:
                raise BadSpec(f"fock_cutoff must be a positive integer or 'auto', got {self.fock_cutoff!r}")
        if not 0.0 < self.tail_tol < 1.0:
            raise BadSpec(f"tail_tol must lie in (0, 1), got {self.tail_tol}")
        if self.kind == "mixture":
            if not self.components:
                raise BadSpec("mixture needs at least one component")
            weights = np.array([w for w, _ in self.components], dtype=float)
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
                raise BadSpec(f"mixture weights must be nonnegative and sum to 1, got {weights.tolist()}")


def thermal_populations(nbar: float, cutoff: int) -> np.ndarray:
    """Unnormalized p(n) = nbar^n / (1 + nbar)^(n+1) for n < cutoff."""
    x = nbar / (1.0 + nbar)
    return x ** np.arange(cutoff) / (1.0 + nbar)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff)
    r = abs(alpha)
    if r == 0.0:
        out = np.zeros(cutoff, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * r * r + n * math.log(r) - 0.5 * special.gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def squeezed_vacuum_amplitudes(r: float, cutoff: int) -> np.ndarray:
    """Fock amplitudes of exp((r a^2 - r a^dag^2)/2)|0>; odd entries vanish.

    With real r > 0 the position quadrature is squeezed.
    """
    out = np.zeros(cutoff, dtype=complex)
    t = math.tanh(abs(r))
    k = np.arange((cutoff + 1) // 2)
    if t == 0.0:
        out[0] = 1.0
        return out
    logmag = (
        k * math.log(t)
        + 0.5 * special.gammaln(2 * k + 1)
        - k * math.log(2.0)
        - special.gammaln(k + 1)
        - 0.5 * math.log(math.cosh(r))
    )
    sign = (-1.0) ** k if r > 0 else np.ones_like(logmag)
    out[0::2] = sign * np.exp(logmag)
    return out


def tail_mass(spec: StateSpec, cutoff: int) -> float:
    """Probability mass on Fock levels >= cutoff (an upper bound for squeezing)."""
    kind, p = spec.kind, spec.params
    if kind == "thermal":
        nbar = p["nbar"]
        return (nbar / (1.0 + nbar)) ** cutoff
    if kind == "coherent":
        return float(stats.poisson.sf(cutoff - 1, abs(p["alpha"]) ** 2))
    if kind == "squeezed_vacuum":
        t2 = math.tanh(abs(p["r"])) ** 2
        first_even = cutoff + (cutoff % 2)
        amp = squeezed_vacuum_amplitudes(p["r"], first_even + 1)[first_even]
        # p(2k+2)/p(2k) < tanh(r)^2, so the even tail is dominated by a geometric series
        return float(abs(amp) ** 2 / (1.0 - t2))
    if kind == "fock":
        return 0.0 if cutoff > p["n"] else 1.0
    if kind == "matrix_file":
        return 0.0 if cutoff >= _matrix_of(spec).shape[0] else 1.0
    if kind == "mixture":
        return float(sum(w * tail_mass(c, cutoff) for w, c in spec.components))
    raise BadSpec(kind)


def _validate_params(spec: StateSpec) -> None:
    p = spec.params
    try:
        if spec.kind == "thermal" and not p["nbar"] >= 0:
            raise BadSpec(f"thermal nbar must be >= 0, got {p['nbar']}")
        if spec.kind == "fock" and (int(p["n"]) != p["n"] or p["n"] < 0):
            raise BadSpec(f"fock n must be a nonnegative integer, got {p['n']}")
        if spec.kind == "coherent":
            complex(p["alpha"])
        if spec.kind == "squeezed_vacuum":
            float(p["r"])
        if spec.kind == "matrix_file":
            str(p["path"])
    except KeyError as exc:
        raise BadSpec(f"{spec.kind} state is missing parameter {exc}") from exc


def resolve_cutoff(spec: StateSpec, max_dim: int = linalg.MAX_DIM) -> int:
    """Cutoff to use for ``spec``: explicit, or the smallest with tail <= tail_tol."""
    _validate_params(spec)
    if spec.fock_cutoff != "auto":
        return int(spec.fock_cutoff)
    kind = spec.kind
    if kind == "thermal":
        nbar = spec.params["nbar"]
        if nbar == 0:
            return 1
        x = nbar / (1.0 + nbar)
        n = max(1, math.ceil(math.log(spec.tail_tol) / math.log(x)))
        while n > 1 and x ** (n - 1) <= spec.tail_tol:
            n -= 1
        while x**n > spec.tail_tol:
            n += 1
        if n > max_dim:
            raise CutoffTooSmall(f"thermal nbar={nbar} needs cutoff {n} > max_dim={max_dim}")
        return n
    if kind == "fock":
        return int(spec.params["n"]) + 1
    if kind == "matrix_file":
        return _matrix_of(spec).shape[0]
    if kind == "mixture":
        return max(resolve_cutoff(c, max_dim) for _, c in spec.components)
    # coherent / squeezed: linear scan with the numeric tail
    n = 1
    while tail_mass(spec, n) > spec.tail_tol:
        n += 1
        if n > max_dim:
            raise CutoffTooSmall(f"{kind} state tail exceeds {spec.tail_tol} at max_dim={max_dim}")
    return n


_MATRIX_CACHE: dict = {}


def _matrix_of(spec: StateSpec) -> np.ndarray:
    path = str(spec.params["path"])
    if path not in _MATRIX_CACHE:
        _MATRIX_CACHE[path] = load_matrix_file(path)
    return _MATRIX_CACHE[path]


def _raw_matrix(spec: StateSpec, n: int) -> np.ndarray:
    kind, p = spec.kind, spec.params
    if kind == "thermal":
        return np.diag(thermal_populations(p["nbar"], n)).astype(complex)
    if kind in ("coherent", "squeezed_vacuum"):
        amps = coherent_amplitudes(p["alpha"], n) if kind == "coherent" else squeezed_vacuum_amplitudes(p["r"], n)
        return np.outer(amps, amps.conj())
    if kind == "fock":
        m = np.zeros((n, n), dtype=complex)
        if p["n"] < n:
            m[p["n"], p["n"]] = 1.0
        return m
    if kind == "matrix_file":
        src = _matrix_of(spec)
        d = src.shape[0]
        if n < d:
            raise BadSpec(f"matrix state of dim {d} cannot be truncated to {n}")
        m = np.zeros((n, n), dtype=complex)
        m[:d, :d] = src
        return m
    if kind == "mixture":
        return sum(w * _raw_matrix(c, n) for w, c in spec.components)
    raise BadSpec(kind)


def build_state(spec: StateSpec, cutoff: Optional[int] = None, max_dim: int = linalg.MAX_DIM) -> DensityMatrix:
    """Density matrix for ``spec`` in the Fock basis |0>..|N-1>.

    ``cutoff`` overrides ``spec.fock_cutoff``, which is how pairs of states
    are put on a common truncation (see ``build_states``).
    """
    n = resolve_cutoff(spec, max_dim) if cutoff is None else int(cutoff)
    if n < 1:
        raise BadSpec(f"cutoff must be >= 1, got {n}")
    linalg.check_dim(n, max_dim)
    m = _raw_matrix(spec, n)
    tr = float(np.trace(m).real)
    if tr <= 0:
        raise CutoffTooSmall(f"cutoff {n} removes all mass of {spec.kind} state")
    deficit = max(0.0, 1.0 - tr)
    if spec.kind == "matrix_file":
        deficit = 0.0
    m = linalg.hermitize(m / tr)
    return DensityMatrix(m, deficit, describe(spec))


def build_states(*specs: StateSpec, max_dim: int = linalg.MAX_DIM) -> list[DensityMatrix]:
    """Build several states on one shared cutoff (the largest any of them needs).

    States compared by relative entropy must live on the same truncation;
    building each at its own auto cutoff would leave the smaller one with
    an artificially reduced support.
    """
    n = max(resolve_cutoff(s, max_dim) for s in specs)
    return [build_state(s, cutoff=n, max_dim=max_dim) for s in specs]


def tensor_power(rho: DensityMatrix, l: int, max_dim: int = linalg.MAX_DIM) -> DensityMatrix:
    if l < 1:
        raise BadSpec("tensor power must be >= 1")
    if l == 1:
        return rho
    m = linalg.kron_power(rho.matrix, l, max_dim)
    deficit = 1.0 - (1.0 - rho.trace_deficit) ** l
    return DensityMatrix(m, deficit, f"({rho.label})^{l}" if rho.label else "")


# -- descriptor grammar ------------------------------------------------------

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _kv(body: str) -> dict:
    out = {}
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise BadSpec(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _num(value: str, what: str) -> float:
    if not re.fullmatch(_FLOAT, value):
        raise BadSpec(f"{what}: not a number: {value!r}")
    return float(value)


def parse_state_spec(text: str) -> StateSpec:
    """Parse a descriptor such as ``thermal:nbar=0.5@cutoff=40,tail=1e-12``.

    Grammar: ``thermal:nbar=<f>``, ``coherent:re=<f>,im=<f>``,
    ``squeezed:r=<f>``, ``fock:n=<int>``, ``matrix:<path>`` and
    ``mix:w1*<spec>|w2*<spec>``, each with an optional
    ``@cutoff=<N|auto>,tail=<f>`` suffix. Mixture components take no suffix
    of their own.
    """
    text = text.strip()
    body, _, suffix = text.rpartition("@") if "@" in text else (text, "", "")
    cutoff: Union[int, str] = "auto"
    tail = TAIL_TOL
    if suffix:
        opts = _kv(suffix)
        unknown = set(opts) - {"cutoff", "tail"}
        if unknown:
            raise BadSpec(f"unknown suffix options {sorted(unknown)}")
        if "cutoff" in opts and opts["cutoff"] != "auto":
            if not opts["cutoff"].isdigit():
                raise BadSpec(f"cutoff must be an integer or 'auto', got {opts['cutoff']!r}")
            cutoff = int(opts["cutoff"])
        if "tail" in opts:
            tail = _num(opts["tail"], "tail")
    if ":" not in body:
        raise BadSpec(f"state descriptor needs 'kind:params', got {text!r}")
    kind, args = body.split(":", 1)
    kind = kind.strip()
    if kind == "mix":
        components = []
        for part in args.split("|"):
            if "*" not in part:
                raise BadSpec(f"mixture component needs 'weight*spec', got {part!r}")
            w, sub = part.split("*", 1)
            if "@" in sub:
                raise BadSpec("mixture components cannot carry their own '@' suffix")
            components.append((_num(w.strip(), "mixture weight"), parse_state_spec(sub)))
        total = sum(w for w, _ in components)
        if abs(total - 1.0) > 1e-9:
            raise BadSpec(f"mixture weights sum to {total}, not 1")
        return StateSpec("mixture", {}, cutoff, tail, tuple(components))
    if kind == "matrix":
        return StateSpec("matrix_file", {"path": args.strip()}, cutoff, tail)
    kv = _kv(args)
    expected = {"thermal": {"nbar"}, "coherent": {"re", "im"}, "squeezed": {"r"}, "fock": {"n"}}
    if kind not in expected:
        raise BadSpec(f"unknown state kind {kind!r}")
    extra = set(kv) - expected[kind]
    if extra:
        raise BadSpec(f"unexpected parameters {sorted(extra)} for {kind}")
    if kind == "thermal":
        params = {"nbar": _num(kv.get("nbar", ""), "nbar")}
        if params["nbar"] < 0:
            raise BadSpec(f"thermal nbar must be >= 0, got {params['nbar']}")
        return StateSpec("thermal", params, cutoff, tail)
    if kind == "coherent":
        alpha = complex(_num(kv.get("re", "0"), "re"), _num(kv.get("im", "0"), "im"))
        return StateSpec("coherent", {"alpha": alpha}, cutoff, tail)
    if kind == "squeezed":
        return StateSpec("squeezed_vacuum", {"r": _num(kv.get("r", ""), "r")}, cutoff, tail)
    n = kv.get("n", "")
    if not n.isdigit():
        raise BadSpec(f"fock n must be a nonnegative integer, got {n!r}")
    return StateSpec("fock", {"n": int(n)}, cutoff, tail)


def describe(spec: StateSpec) -> str:
    p = spec.params
    if spec.kind == "thermal":
        return f"thermal(nbar={p['nbar']:g})"
    if spec.kind == "coherent":
        return f"coherent(alpha={p['alpha']:g})"
    if spec.kind == "squeezed_vacuum":
        return f"squeezed(r={p['r']:g})"
    if spec.kind == "fock":
        return f"fock(n={p['n']})"
    if spec.kind == "matrix_file":
        return f"matrix({p['path']})"
    return "mix(" + ", ".join(f"{w:g}*{describe(c)}" for w, c in spec.components) + ")"
