"""Heisenberg-picture quantum stochastic processes.

A process is an :class:`EvolutionFamily` ``t -> U_t`` together with a
density operator ``rho``.  Observables at time ``t`` are embedded by the
*-homomorphism ``j_t(x) = U_t* x U_t``; multi-time correlation kernels,
time-ordered (pyramidal) probabilities and sequential measurement
statistics are built on top of it.

Measurement schedules are given as a list of projector families, one per
time.  A :class:`~qsptensor.linalg.SpectralDecomposition` is such a family,
but any sequence of projectors summing to the identity works too.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (
    DimensionError,
    as_matrix,
    dag,
    expm_hermitian,
    is_hermitian,
    is_projector,
    is_unitary,
    op_norm,
    unitary_generator,
)
from .config import resolve_tol


class DomainError(ValueError):
    """A time lies outside the domain of an evolution family."""


class ScheduleError(ValueError):
    """Malformed time tuple, operator tuple or outcome string."""


class MarginalizationError(ValueError):
    """Marginalization was requested at the final time, where it is trivial."""


# -- evolution -------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Constant-generator piece ``[t_start, t_end]`` of an evolution family.

    Exactly one of ``hamiltonian`` and ``unitary`` is given.  An explicit
    unitary is the propagator over the whole segment; inside the segment it
    is interpolated through its principal Hermitian generator.
    """

    t_start: float
    t_end: float
    hamiltonian: np.ndarray | None = None
    unitary: np.ndarray | None = None
    _generator: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if (self.hamiltonian is None) == (self.unitary is None):
            raise ValueError("a segment needs exactly one of hamiltonian or unitary")
        if not self.t_end > self.t_start:
            raise ValueError(f"segment [{self.t_start}, {self.t_end}] has non-positive length")
        if self.hamiltonian is not None:
            h = as_matrix(self.hamiltonian, "hamiltonian")
            if not is_hermitian(h):
                raise ValueError("segment hamiltonian is not Hermitian")
            gen = h
        else:
            if math.isinf(self.t_end):
                raise ValueError("an explicit-unitary segment needs a finite end time")
            u = as_matrix(self.unitary, "unitary")
            if not is_unitary(u, 1e-9):
                raise ValueError("segment unitary is not unitary")
            gen = unitary_generator(u) / (self.t_end - self.t_start)
        object.__setattr__(self, "_generator", gen)

    @property
    def dim(self) -> int:
        return self._generator.shape[0]

    def propagator(self, t: float) -> np.ndarray:
        """Propagator from ``t_start`` to ``t`` (``t`` inside the segment)."""
        if self.unitary is not None and t == self.t_end:
            return as_matrix(self.unitary)
        return expm_hermitian(self._generator, t - self.t_start)


class EvolutionFamily:
    """Piecewise unitary evolution ``U_t`` with ``U_0 = I``.

    ``U_t`` is the time-ordered product of the segment propagators up to
    ``t``.  Instances are immutable.
    """

    def __init__(self, segments: Sequence[Segment]):
        segments = tuple(segments)
        if not segments:
            raise ValueError("an evolution family needs at least one segment")
        if segments[0].t_start != 0:
            raise ValueError("the first segment must start at t = 0")
        for prev, nxt in zip(segments, segments[1:]):
            if prev.t_end != nxt.t_start:
                raise ValueError(f"segments are not contiguous at t = {prev.t_end}")
        dims = {s.dim for s in segments}
        if len(dims) != 1:
            raise DimensionError(f"segments act on different dimensions {sorted(dims)}")
        self._segments = segments
        self._dim = dims.pop()
        # propagators at the segment boundaries
        full = [np.eye(self._dim, dtype=complex)]
        for s in segments[:-1]:
            full.append(s.propagator(s.t_end) @ full[-1])
        self._boundary = tuple(full)

    @classmethod
    def constant(cls, hamiltonian, t_end: float = math.inf) -> "EvolutionFamily":
        return cls([Segment(0.0, t_end, hamiltonian=hamiltonian)])

    @classmethod
    def frozen(cls, d: int, t_end: float = math.inf) -> "EvolutionFamily":
        return cls.constant(np.zeros((d, d), dtype=complex), t_end)

    @classmethod
    def from_unitaries(cls, times: Sequence[float], unitaries: Sequence[np.ndarray]) -> "EvolutionFamily":
        """Family whose propagator over ``[times[j-1], times[j]]`` is ``unitaries[j]``.

        ``times`` are the segment end points, the first segment starts at 0.
        """
        starts = [0.0, *times[:-1]]
        return cls([Segment(a, b, unitary=u) for a, b, u in zip(starts, times, unitaries)])

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    @property
    def total_dim(self) -> int:
        return self._dim

    @property
    def t_max(self) -> float:
        return self._segments[-1].t_end

    def propagator(self, t: float) -> np.ndarray:
        """Schrödinger propagator ``U_t`` from time 0 to ``t``."""
        if not 0 <= t <= self.t_max:
            raise DomainError(f"t = {t} lies outside [0, {self.t_max}]")
        if t == 0:
            return np.eye(self._dim, dtype=complex)
        for k, seg in enumerate(self._segments):
            if t <= seg.t_end:
                return seg.propagator(t) @ self._boundary[k]
        raise DomainError(f"t = {t} lies outside [0, {self.t_max}]")  # pragma: no cover

    def propagator_between(self, t1: float, t2: float) -> np.ndarray:
        """Propagator from ``t1`` to ``t2``: ``U_{t2} U_{t1}*``."""
        if t1 > t2:
            raise ScheduleError(f"interval start {t1} is after its end {t2}")
        return self.propagator(t2) @ dag(self.propagator(t1))


def _check_op(fam: EvolutionFamily, x, name="operator") -> np.ndarray:
    x = as_matrix(x, name)
    if x.shape[0] != fam.total_dim:
        raise DimensionError(f"{name} has dimension {x.shape[0]}, the process has {fam.total_dim}")
    return x


def heisenberg(fam: EvolutionFamily, t: float, x) -> np.ndarray:
    """``j_t(x) = U_t* x U_t``."""
    x = _check_op(fam, x)
    u = fam.propagator(t)
    return dag(u) @ x @ u


def heisenberg_inv(fam: EvolutionFamily, t: float, x) -> np.ndarray:
    """``j_t*(x) = U_t x U_t*``, the inverse of :func:`heisenberg`."""
    x = _check_op(fam, x)
    u = fam.propagator(t)
    return u @ x @ dag(u)


def interval_map(fam: EvolutionFamily, t1: float, t2: float, x) -> np.ndarray:
    """``j_{t1,t2} = j_{t2} ∘ j_{t1}*``, i.e. ``U_{t2}* U_{t1} x U_{t1}* U_{t2}``."""
    if t1 > t2:
        raise ScheduleError(f"interval start {t1} is after its end {t2}")
    x = _check_op(fam, x)
    v = dag(fam.propagator(t2)) @ fam.propagator(t1)
    return v @ x @ dag(v)


def interval_map_inv(fam: EvolutionFamily, t1: float, t2: float, x) -> np.ndarray:
    """``j_{t1} ∘ j_{t2}*``, the inverse of :func:`interval_map`."""
    if t1 > t2:
        raise ScheduleError(f"interval start {t1} is after its end {t2}")
    x = _check_op(fam, x)
    v = dag(fam.propagator(t1)) @ fam.propagator(t2)
    return v @ x @ dag(v)


def schrodinger_step(fam: EvolutionFamily, t1: float, t2: float, rho) -> np.ndarray:
    """Propagate a state from ``t1`` to ``t2``: ``U_{t2} U_{t1}* rho U_{t1} U_{t2}*``.

    This is ``j_{t2}* ∘ j_{t1}``.  It agrees with :func:`interval_map_inv`
    whenever ``U_{t1}`` and ``U_{t2}`` commute (for instance for a single
    time-independent Hamiltonian) but not for general piecewise families.
    """
    rho = _check_op(fam, rho, "state")
    v = fam.propagator_between(t1, t2)
    return v @ rho @ dag(v)


# -- schedules -------------------------------------------------------------

def check_times(times: Sequence[float]) -> tuple[float, ...]:
    times = tuple(float(t) for t in times)
    if any(t < 0 for t in times):
        raise ScheduleError(f"times must be non-negative, got {times}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScheduleError(f"times must be strictly increasing, got {times}")
    return times


def check_state(rho, d: int | None = None, tol: float | None = None) -> np.ndarray:
    rho = as_matrix(rho, "state")
    if d is not None and rho.shape[0] != d:
        raise DimensionError(f"state has dimension {rho.shape[0]}, expected {d}")
    tol = max(resolve_tol(tol), 1e-9)
    if not is_hermitian(rho, tol):
        raise ValueError("state is not Hermitian")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ValueError("state is not positive semidefinite")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError(f"state has trace {np.trace(rho).real:.12g}, expected 1")
    return rho


def _projector_family(instr) -> tuple[np.ndarray, ...]:
    return tuple(getattr(instr, "projectors", instr))


def _check_schedule(fam, times, instruments, outcomes=None):
    times = check_times(times)
    if len(instruments) != len(times):
        raise ScheduleError(f"{len(instruments)} instruments for {len(times)} times")
    families = [tuple(_check_op(fam, p, "projector") for p in _projector_family(i)) for i in instruments]
    if outcomes is not None:
        if len(outcomes) != len(times):
            raise ScheduleError(f"{len(outcomes)} outcomes for {len(times)} times")
        for k, (m, fam_k) in enumerate(zip(outcomes, families)):
            if m is not None and not 0 <= m < len(fam_k):
                raise ScheduleError(f"outcome index {m} at position {k} is out of range 0..{len(fam_k) - 1}")
    return times, families


# -- kernels and probabilities ---------------------------------------------

def embedded_product(fam: EvolutionFamily, times: Sequence[float], ops: Sequence) -> np.ndarray:
    """``j_{t_n}(a_n) ... j_{t_1}(a_1)``."""
    out = np.eye(fam.total_dim, dtype=complex)
    for t, a in zip(times, ops):
        out = heisenberg(fam, t, a) @ out
    return out


def correlation_kernel(fam: EvolutionFamily, rho, times: Sequence[float], a: Sequence, b: Sequence) -> complex:
    """Correlation kernel ``w(a, b) = tr(rho J(a)* J(b))``.

    ``J(a) = j_{t_n}(a_n) ... j_{t_1}(a_1)``; ``a`` and ``b`` are operator
    tuples of the same length as ``times``.
    """
    times = check_times(times)
    if not len(a) == len(b) == len(times):
        raise ScheduleError(f"tuple lengths {len(a)}, {len(b)} do not match {len(times)} times")
    rho = _check_op(fam, rho, "state")
    ja = embedded_product(fam, times, a)
    jb = embedded_product(fam, times, b)
    return complex(np.trace(rho @ dag(ja) @ jb))


def pyramidal_probability(fam: EvolutionFamily, rho, times: Sequence[float], projectors: Sequence, tol: float | None = None) -> float:
    """Time-ordered probability ``⟨Q_1 ... Q_n Q_n ... Q_1⟩`` of a chain of events."""
    for k, p in enumerate(projectors):
        if not is_projector(p, max(resolve_tol(tol), 1e-9)):
            raise ValueError(f"operator at position {k} is not a projector")
    return correlation_kernel(fam, rho, times, projectors, projectors).real


def sequential_probability(fam: EvolutionFamily, rho, times: Sequence[float], instruments: Sequence, outcomes: Sequence[int]) -> float:
    """Probability of observing ``outcomes`` in time order.

    Computed in the Schrödinger picture: the state is propagated between
    measurement times and sandwiched by the selected projector at each one.
    """
    times, families = _check_schedule(fam, times, instruments, outcomes)
    if any(m is None for m in outcomes):
        raise ScheduleError("every position needs an outcome")
    return float(np.trace(_branch_state(fam, rho, times, families, outcomes)).real)


def _branch_state(fam, rho, times, families, outcomes) -> np.ndarray:
    state = _check_op(fam, rho, "state")
    t_prev = 0.0
    for t, fam_k, m in zip(times, families, outcomes):
        state = schrodinger_step(fam, t_prev, t, state)
        p = fam_k[m]
        state = p @ state @ p
        t_prev = t
    return state


def outcome_distribution(fam: EvolutionFamily, rho, times: Sequence[float], instruments: Sequence) -> dict[tuple[int, ...], float]:
    """Probabilities of every outcome string, keyed by outcome-index tuples."""
    times, families = _check_schedule(fam, times, instruments)
    out: dict[tuple[int, ...], float] = {}

    def walk(k, t_prev, state, prefix):
        if k == len(times):
            out[prefix] = float(np.trace(state).real)
            return
        evolved = schrodinger_step(fam, t_prev, times[k], state)
        for m, p in enumerate(families[k]):
            walk(k + 1, times[k], p @ evolved @ p, prefix + (m,))

    walk(0, 0.0, _check_op(fam, rho, "state"), ())
    return out


def marginalization_gap(fam: EvolutionFamily, rho, times: Sequence[float], instruments: Sequence, outcomes_with_hole: Sequence[int | None]) -> float:
    """Consistency defect when one intermediate measurement is summed over.

    ``outcomes_with_hole`` has exactly one ``None`` entry at position ``k``;
    the result is ``|Σ_{m_k} P(..., m_k, ...) - P_{without t_k}(...)|``.
    """
    times, families = _check_schedule(fam, times, instruments, outcomes_with_hole)
    holes = [k for k, m in enumerate(outcomes_with_hole) if m is None]
    if len(holes) != 1:
        raise ScheduleError(f"exactly one unspecified outcome is required, got {len(holes)}")
    k = holes[0]
    if k == len(times) - 1:
        raise MarginalizationError("summing over the final measurement never changes the distribution; hole must be before the last time")
    summed = 0.0
    for m in range(len(families[k])):
        filled = list(outcomes_with_hole)
        filled[k] = m
        summed += sequential_probability(fam, rho, times, families, filled)
    rest = [i for i in range(len(times)) if i != k]
    reduced = sequential_probability(
        fam, rho, [times[i] for i in rest], [families[i] for i in rest], [outcomes_with_hole[i] for i in rest]
    )
    return abs(summed - reduced)


@dataclass(frozen=True)
class QndReport:
    """Largest commutator between Heisenberg-picture projectors at different times."""

    max_commutator: float
    #: ``(j, k, m_j, m_k, norm)`` for every pair of times and outcomes
    pairs: tuple[tuple[int, int, int, int, float], ...]

    def is_qnd(self, tol: float | None = None) -> bool:
        return self.max_commutator <= resolve_tol(tol)


def qnd_check(fam: EvolutionFamily, times: Sequence[float], instruments: Sequence) -> QndReport:
    times, families = _check_schedule(fam, times, instruments)
    embedded = [[heisenberg(fam, t, p) for p in fam_k] for t, fam_k in zip(times, families)]
    pairs = []
    for j, k in itertools.combinations(range(len(times)), 2):
        for (mj, pj), (mk, pk) in itertools.product(enumerate(embedded[j]), enumerate(embedded[k])):
            pairs.append((j, k, mj, mk, op_norm(pj @ pk - pk @ pj)))
    worst = max((p[-1] for p in pairs), default=0.0)
    return QndReport(worst, tuple(pairs))
