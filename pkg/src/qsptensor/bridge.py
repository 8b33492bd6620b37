"""From correlation kernels to the process tensor.

The kernel of a system-environment process, ``w(a, b)``, is rewritten as a
complex combination of diagonal kernels ``w(R, R)`` by polarizing each time
slot.  A diagonal kernel equals the trace of the process tensor evaluated on
the sandwich maps ``X -> R_j X R_j*``.  Attaching an ancilla with suitably
orthogonal operators turns a single diagonal kernel of the extended process
into a non-negative combination of such evaluations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import MAX_ANCILLA_TERMS, MAX_DIM, resolve_tol
from .linalg import DimensionError, as_matrix, check_dim_cap, dag, partial_trace
from .qsp import EvolutionFamily, Segment, check_state, check_times, correlation_kernel
from .sampling import random_density, random_hermitian, random_unitary
from .serialization import complex_to_pair, fmt_float, matrix_from_literal, matrix_to_literal

# e^{i n pi / 2} and the matching coefficients (-i)^n / 4
_PHASES = (1, 1j, -1, -1j)
_COEFFS = tuple(((-1j) ** k) / 4 for k in range(4))


def polarize(x, y) -> list[tuple[complex, np.ndarray]]:
    """Four ``(c_n, x + i^n y)`` pairs with ``Σ c_n (x + i^n y)* Z (x + i^n y) = x* Z y``."""
    x = as_matrix(x)
    y = as_matrix(y)
    if x.shape != y.shape:
        raise DimensionError(f"cannot polarize shapes {x.shape} and {y.shape}")
    return [(c, x + p * y) for c, p in zip(_COEFFS, _PHASES)]


def recombine(terms: Sequence[tuple[complex, np.ndarray]], z) -> np.ndarray:
    z = as_matrix(z)
    return sum(c * (dag(r) @ z @ r) for c, r in terms)


@dataclass(frozen=True)
class PolarizationDecomposition:
    """``w(a, b) = Σ_k c_k w(R_k, R_k)`` for operator tuples ``R_k``."""

    terms: tuple[tuple[complex, tuple[np.ndarray, ...]], ...]

    def __len__(self) -> int:
        return len(self.terms)

    def evaluate(self, diagonal_kernel) -> complex:
        """Combine ``diagonal_kernel(R)`` values over all terms."""
        return complex(sum(c * diagonal_kernel(r) for c, r in self.terms))


def kernel_decompose(a: Sequence, b: Sequence, simplify: bool = False) -> PolarizationDecomposition:
    """Polarize every slot of ``(a, b)``, giving ``4**n`` diagonal terms.

    With ``simplify=True`` slots where ``a_j`` and ``b_j`` are equal are
    left unpolarized, since they are already diagonal.
    """
    if len(a) != len(b):
        raise ValueError(f"tuple lengths differ: {len(a)} and {len(b)}")
    per_slot = []
    for x, y in zip(a, b):
        x = as_matrix(x)
        y = as_matrix(y)
        if simplify and x.shape == y.shape and np.array_equal(x, y):
            per_slot.append([(1.0 + 0j, x)])
        else:
            per_slot.append(polarize(x, y))
    terms = []
    for choice in itertools.product(*per_slot):
        c = complex(np.prod([t[0] for t in choice])) if choice else 1.0 + 0j
        terms.append((c, tuple(t[1] for t in choice)))
    return PolarizationDecomposition(tuple(terms))


# -- dilations --------------------------------------------------------------

@dataclass(frozen=True)
class Dilation:
    """System-environment process: initial ``rho_se`` and an evolution family on ``s ⊗ e``."""

    rho_se: np.ndarray
    evolution: EvolutionFamily
    d_s: int

    def __post_init__(self):
        d = self.evolution.total_dim
        if d % self.d_s:
            raise DimensionError(f"system dimension {self.d_s} does not divide {d}")
        object.__setattr__(self, "rho_se", check_state(self.rho_se, d))

    @property
    def d_e(self) -> int:
        return self.evolution.total_dim // self.d_s

    def ampliate(self, w) -> np.ndarray:
        """System operator ``w`` as ``w ⊗ I`` on ``s ⊗ e``."""
        w = as_matrix(w)
        if w.shape[0] != self.d_s:
            raise DimensionError(f"system operator has dimension {w.shape[0]}, expected {self.d_s}")
        return np.kron(w, np.eye(self.d_e))


def random_dilation(d_s: int, d_e: int, rng: np.random.Generator, t_max: float = 3.0, n_segments: int = 3) -> Dilation:
    """Correlated ``rho_se`` and a piecewise evolution with non-commuting pieces."""
    d = d_s * d_e
    cuts = np.sort(rng.uniform(0, t_max, size=n_segments - 1))
    bounds = [0.0, *cuts, t_max]
    segments = []
    for k, (a, b) in enumerate(zip(bounds, bounds[1:])):
        if k % 2:
            segments.append(Segment(float(a), float(b), unitary=random_unitary(d, rng)))
        else:
            segments.append(Segment(float(a), float(b), hamiltonian=random_hermitian(d, rng)))
    return Dilation(random_density(d, rng), EvolutionFamily(segments), d_s)


def random_times(n: int, rng: np.random.Generator, t_max: float = 3.0) -> tuple[float, ...]:
    while True:
        times = tuple(float(t) for t in np.sort(rng.uniform(0, t_max, size=n)))
        if all(b - a > 1e-3 for a, b in zip(times, times[1:])):
            return times


class DilatedProcessTensor:
    """Process tensor ``T^s`` of a dilation at fixed times.

    Evaluated on sandwich maps ``X -> W X W*``: each slot's system operator
    acts as ``W ⊗ I`` on ``s ⊗ e`` and the state is carried between times by
    the dilation's own propagator.  Nothing here depends on any ancilla.
    """

    def __init__(self, dilation: Dilation, times: Sequence[float]):
        self.dilation = dilation
        self.times = check_times(times)
        if self.times and self.times[-1] > dilation.evolution.t_max:
            raise ValueError("times exceed the domain of the evolution family")
        starts = (0.0, *self.times[:-1])
        self._steps = tuple(dilation.evolution.propagator_between(a, b) for a, b in zip(starts, self.times))

    @property
    def n(self) -> int:
        return len(self.times)

    def evaluate_sandwich(self, ws: Sequence) -> np.ndarray:
        """``T^s(W_1 ⊗ ... ⊗ W_n)`` for single-Kraus slot maps ``W_j``."""
        if len(ws) != self.n:
            raise ValueError(f"{len(ws)} slot operators for {self.n} times")
        rho = self.dilation.rho_se
        for step, w in zip(self._steps, ws):
            k = self.dilation.ampliate(w) @ step
            rho = k @ rho @ dag(k)
        return partial_trace(rho, [self.dilation.d_s, self.dilation.d_e], [0])

    def evaluate(self, weighted: Sequence[tuple[float, Sequence]]) -> np.ndarray:
        """``T^s(Σ_r α_r W_{1,r} ⊗ ... ⊗ W_{n,r})``."""
        out = np.zeros((self.dilation.d_s,) * 2, dtype=complex)
        for alpha, ws in weighted:
            out += alpha * self.evaluate_sandwich(ws)
        return out


def process_tensor_from_dilation(dilation: Dilation, times: Sequence[float]) -> DilatedProcessTensor:
    return DilatedProcessTensor(dilation, times)


# -- ancillas ---------------------------------------------------------------

@dataclass(frozen=True)
class AncillaConstruction:
    """Ancilla state with per-slot ancilla operators ``V[j][r]`` and system operators ``W[j][r]``."""

    rho_a: np.ndarray
    V: tuple[tuple[np.ndarray, ...], ...]
    W: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        rho_a = check_state(self.rho_a)
        V = tuple(tuple(as_matrix(v, "ancilla operator") for v in vs) for vs in self.V)
        W = tuple(tuple(as_matrix(w, "system operator") for w in ws) for ws in self.W)
        if len(V) != len(W) or any(len(vs) != len(ws) for vs, ws in zip(V, W)):
            raise ValueError("V and W must have matching shapes (one list per slot, chi_j entries)")
        if any(len(vs) == 0 for vs in V):
            raise ValueError("every slot needs at least one ancilla operator")
        if any(v.shape[0] != rho_a.shape[0] for vs in V for v in vs):
            raise DimensionError("ancilla operators do not match the ancilla state")
        if len({w.shape[0] for ws in W for w in ws}) > 1:
            raise DimensionError("system operators have mixed dimensions")
        object.__setattr__(self, "rho_a", rho_a)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)

    @property
    def d_a(self) -> int:
        return self.rho_a.shape[0]

    @property
    def n(self) -> int:
        return len(self.V)

    @property
    def chi(self) -> tuple[int, ...]:
        return tuple(len(vs) for vs in self.V)

    def multi_indices(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(c) for c in self.chi)))

    def _ancilla_vectors(self) -> dict[tuple[int, ...], np.ndarray]:
        # V_{n,r_n} ... V_{1,r_1} applied to a square root of rho_a
        w, u = np.linalg.eigh(self.rho_a)
        root = u * np.sqrt(np.clip(w, 0, None))
        out = {}
        for r in self.multi_indices():
            m = root
            for j, rj in enumerate(r):
                m = self.V[j][rj] @ m
            out[r] = m
        return out

    def gram(self) -> tuple[list[tuple[int, ...]], np.ndarray]:
        """``μ_a(V*_{r'} V_r)`` over all multi-index pairs."""
        n_terms = int(np.prod(self.chi))
        if n_terms > MAX_ANCILLA_TERMS:
            raise ValueError(f"{n_terms} ancilla multi-indices exceed the limit {MAX_ANCILLA_TERMS}")
        vecs = self._ancilla_vectors()
        idx = list(vecs)
        g = np.array([[np.vdot(vecs[rp], vecs[r]) for r in idx] for rp in idx])
        return idx, g

    def diagonality_defect(self) -> float:
        """Largest off-diagonal ``|μ_a(V*_{r'} V_r)|``, zero when the construction is valid."""
        _, g = self.gram()
        off = g - np.diag(np.diag(g))
        return float(np.max(np.abs(off))) if off.size else 0.0

    def alpha(self, tol: float | None = None) -> dict[tuple[int, ...], float]:
        """Weights ``α_r = μ_a(V*_{1,r_1} ... V*_{n,r_n} V_{n,r_n} ... V_{1,r_1})``."""
        tol = max(resolve_tol(tol), 1e-9)
        idx, g = self.gram()
        out = {}
        for r, val in zip(idx, np.diag(g)):
            a = float(val.real)
            if a < -tol:
                raise ValueError(f"negative ancilla weight {a:.3g} at {r}")
            out[r] = max(a, 0.0)
        return out

    def validate(self, tol: float | None = None) -> None:
        tol = max(resolve_tol(tol), 1e-9)
        defect = self.diagonality_defect()
        if defect > tol:
            raise ValueError(f"ancilla operators violate the diagonality condition (defect {defect:.3g})")

    def system_operators(self) -> list[np.ndarray]:
        """``a_j = Σ_r V_{j,r} ⊗ W_{j,r}`` on ``ancilla ⊗ system``."""
        return [sum(np.kron(v, w) for v, w in zip(vs, ws)) for vs, ws in zip(self.V, self.W)]

    def weighted_sequence(self) -> list[tuple[float, tuple[np.ndarray, ...]]]:
        """``[(α_r, (W_{1,r_1}, ..., W_{n,r_n}))]`` for every multi-index."""
        return [(a, tuple(self.W[j][rj] for j, rj in enumerate(r))) for r, a in self.alpha().items()]

    def to_json(self) -> dict:
        return {
            "d_a": self.d_a,
            "rho_a": matrix_to_literal(self.rho_a),
            "V": [[matrix_to_literal(v) for v in vs] for vs in self.V],
            "W": [[matrix_to_literal(w) for w in ws] for ws in self.W],
        }

    @classmethod
    def from_json(cls, data) -> "AncillaConstruction":
        anc = cls(
            matrix_from_literal(data["rho_a"]),
            tuple(tuple(matrix_from_literal(v) for v in vs) for vs in data["V"]),
            tuple(tuple(matrix_from_literal(w) for w in ws) for ws in data["W"]),
        )
        if "d_a" in data and int(data["d_a"]) != anc.d_a:
            raise DimensionError(f"d_a = {data['d_a']} does not match rho_a")
        return anc


def register_ancilla(W: Sequence[Sequence], amplitudes: Sequence[Sequence[complex]] | None = None) -> AncillaConstruction:
    """Ancilla of one register per slot, prepared in ``|0...0⟩``.

    ``V_{j,r}`` writes ``|r⟩`` into register ``j`` with amplitude
    ``amplitudes[j][r]`` (``c |r⟩⟨0|`` on that register, identity elsewhere),
    so distinct multi-indices leave the ancilla in orthogonal states and
    ``α_r = Π_j |amplitudes[j][r_j]|²``.
    """
    chi = [len(ws) for ws in W]
    amplitudes = [[1.0] * c for c in chi] if amplitudes is None else amplitudes
    d_a = int(np.prod(chi))
    rho_a = np.zeros((d_a, d_a), dtype=complex)
    rho_a[0, 0] = 1.0
    V = []
    for j, c in enumerate(chi):
        before = int(np.prod(chi[:j]))
        after = int(np.prod(chi[j + 1:]))
        vs = []
        for r in range(c):
            unit = np.zeros((c, c), dtype=complex)
            unit[r, 0] = amplitudes[j][r]
            vs.append(np.kron(np.kron(np.eye(before), unit), np.eye(after)))
        V.append(tuple(vs))
    return AncillaConstruction(rho_a, tuple(V), tuple(tuple(ws) for ws in W))


def ampliate_family(fam: EvolutionFamily, d_a: int) -> EvolutionFamily:
    """Evolution ``I_a ⊗ U_t`` acting trivially on an ancilla factor."""
    eye = np.eye(d_a)
    segments = []
    for s in fam.segments:
        if s.hamiltonian is not None:
            segments.append(Segment(s.t_start, s.t_end, hamiltonian=np.kron(eye, s.hamiltonian)))
        else:
            segments.append(Segment(s.t_start, s.t_end, unitary=np.kron(eye, s.unitary)))
    return EvolutionFamily(segments)


def extended_kernel(anc: AncillaConstruction, dilation: Dilation, times: Sequence[float], cap: int = MAX_DIM) -> complex:
    """Diagonal kernel ``w^{ase}(a, a)`` of the ancilla-extended process, computed on ``a ⊗ s ⊗ e``."""
    times = check_times(times)
    if anc.n != len(times):
        raise ValueError(f"ancilla construction has {anc.n} slots for {len(times)} times")
    if anc.W[0][0].shape[0] != dilation.d_s:
        raise DimensionError("ancilla system operators do not match the dilation's system")
    check_dim_cap(anc.d_a * dilation.evolution.total_dim, cap)
    anc.validate()
    fam = ampliate_family(dilation.evolution, anc.d_a)
    rho = np.kron(anc.rho_a, dilation.rho_se)
    ops = [np.kron(a, np.eye(dilation.d_e)) for a in anc.system_operators()]
    return correlation_kernel(fam, rho, times, ops, ops)


def ancilla_process_value(anc: AncillaConstruction, dilation: Dilation, times: Sequence[float]) -> complex:
    """``tr T^s(Σ_r α_r W_{1,r_1} ⊗ ... ⊗ W_{n,r_n})``."""
    pt = process_tensor_from_dilation(dilation, times)
    return complex(np.trace(pt.evaluate(anc.weighted_sequence())))


# -- the kernel / process tensor identity ------------------------------------

@dataclass(frozen=True)
class KernelIdentityReport:
    lhs: complex
    rhs: complex
    term_count: int
    tol: float = 1e-8

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return self.abs_error <= self.tol

    def to_json(self) -> dict:
        return {
            "lhs": complex_to_pair(self.lhs),
            "rhs": complex_to_pair(self.rhs),
            "abs_error": fmt_float(self.abs_error),
            "term_count": self.term_count,
            "passed": self.passed,
            "tol": self.tol,
        }


def verify_theorem1(a: Sequence, b: Sequence, dilation: Dilation, times: Sequence[float], tol: float = 1e-8) -> KernelIdentityReport:
    """Compare the Heisenberg kernel ``w(a, b)`` with its process-tensor expansion.

    ``a`` and ``b`` are tuples of system operators.  The left side is the
    correlation kernel of the system-environment process; the right side is
    ``Σ_k c_k tr T^s(R_k)`` from slotwise polarization.
    """
    times = check_times(times)
    if not len(a) == len(b) == len(times):
        raise ValueError("operator tuples and times must have equal lengths")
    lhs = correlation_kernel(
        dilation.evolution,
        dilation.rho_se,
        times,
        [dilation.ampliate(x) for x in a],
        [dilation.ampliate(y) for y in b],
    )
    dec = kernel_decompose(a, b, simplify=True)
    pt = process_tensor_from_dilation(dilation, times)
    rhs = dec.evaluate(lambda r: complex(np.trace(pt.evaluate_sandwich(r))))
    return KernelIdentityReport(lhs, rhs, len(dec), tol)
