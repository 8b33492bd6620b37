"""Schrödinger-picture process tensor of a system-environment dilation.

A :class:`ProcessTensorSpec` holds a (possibly correlated) initial state on
``system ⊗ environment`` and the joint unitary for each interval between
intervention times.  The process tensor maps a sequence of system
operations, one per time, to the unnormalised system state after the last
intervention.

Choi representation
-------------------
:func:`choi_state` returns a matrix on ``d_s ** (2n + 1)`` with legs ordered
``(final, in_1, out_1, ..., in_n, out_n)``.  At slot ``j`` the system state
is routed to leg ``in_j`` and the system continues as one half of a fresh
unnormalised maximally entangled pair whose other half is ``out_j``.  For
operations with Choi matrices ``C_j`` (legs ``output ⊗ input``, see
:func:`qsptensor.linalg.choi_of_operation`) the process tensor is recovered
by :func:`contract_choi`::

    T(O_1, ..., O_n) = tr_legs[Υ (I ⊗ M_1 ⊗ ... ⊗ M_n)],

where ``M_j`` is ``C_j`` transposed with its two legs swapped to
``input ⊗ output``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .config import MAX_DIM, MAX_TREE_LEAVES, PROBABILITY_FLOOR, resolve_tol
from .instruments import QuantumInstrument, QuantumOperation, apply_ampliated
from .linalg import (
    DimensionError,
    as_matrix,
    check_dim_cap,
    dag,
    is_unitary,
    min_eigenvalue,
    partial_trace,
    permute_factors,
    tensor_all,
)
from .qsp import EvolutionFamily, check_times
from .sampling import random_density, random_operation_kraus, random_unitary
from .serialization import matrix_from_literal, matrix_to_literal


class ZeroProbabilityError(ValueError):
    """Conditioning on an outcome whose probability is below the floor."""


@dataclass(frozen=True)
class ProcessTensorSpec:
    """Dilation data: ``rho_se``, intervention ``times`` and interval unitaries.

    ``interval_unitaries[j]`` evolves ``system ⊗ environment`` from
    ``times[j-1]`` (0 for ``j = 0``) to ``times[j]``.  Construction checks
    that ``rho_se`` is a density operator and every interval is unitary;
    pass ``check=False`` to build a deliberately broken spec for audits.
    """

    d_s: int
    d_e: int
    rho_se: np.ndarray
    times: tuple[float, ...]
    interval_unitaries: tuple[np.ndarray, ...]
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = as_matrix(self.rho_se, "rho_se")
        d = self.d_s * self.d_e
        if rho.shape[0] != d:
            raise DimensionError(f"rho_se has dimension {rho.shape[0]}, expected d_s*d_e = {d}")
        times = check_times(self.times)
        us = tuple(as_matrix(u, "interval unitary") for u in self.interval_unitaries)
        if len(us) != len(times):
            raise ValueError(f"{len(us)} interval unitaries for {len(times)} times")
        if any(u.shape[0] != d for u in us):
            raise DimensionError("interval unitaries must act on system ⊗ environment")
        object.__setattr__(self, "rho_se", rho)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "interval_unitaries", us)
        if self.check:
            problems = self.structural_problems()
            if problems:
                raise ValueError("; ".join(problems))

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.d_s * self.d_e

    def structural_problems(self, tol: float | None = None) -> list[str]:
        tol = max(resolve_tol(tol), 1e-9)
        out = []
        rho = self.rho_se
        if np.max(np.abs(rho - dag(rho))) > tol:
            out.append("rho_se is not Hermitian")
        elif min_eigenvalue(rho) < -tol:
            out.append("rho_se is not positive semidefinite")
        if abs(np.trace(rho) - 1) > tol:
            out.append("rho_se does not have unit trace")
        for j, u in enumerate(self.interval_unitaries):
            if not is_unitary(u, tol):
                out.append(f"interval unitary {j} is not unitary")
        return out

    def restrict(self, keep: Sequence[int]) -> "ProcessTensorSpec":
        """Spec on the sub-tuple ``times[keep]``; skipped intervals are multiplied in."""
        keep = sorted(set(keep))
        if not keep or keep[0] < 0 or keep[-1] >= self.n:
            raise ValueError(f"invalid sub-tuple indices {keep}")
        unitaries = []
        prev = -1
        for k in keep:
            u = np.eye(self.dim, dtype=complex)
            for j in range(prev + 1, k + 1):
                u = self.interval_unitaries[j] @ u
            unitaries.append(u)
            prev = k
        return ProcessTensorSpec(
            self.d_s, self.d_e, self.rho_se, tuple(self.times[k] for k in keep), tuple(unitaries), check=self.check
        )

    def to_json(self) -> dict:
        return {
            "d_s": self.d_s,
            "d_e": self.d_e,
            "rho_se": matrix_to_literal(self.rho_se),
            "times": list(self.times),
            "interval_unitaries": [matrix_to_literal(u) for u in self.interval_unitaries],
        }

    @classmethod
    def from_json(cls, data: Mapping, check: bool = True) -> "ProcessTensorSpec":
        missing = {"d_s", "d_e", "rho_se", "times", "interval_unitaries"} - set(data)
        if missing:
            raise ValueError(f"process tensor spec is missing {sorted(missing)}")
        return cls(
            int(data["d_s"]),
            int(data["d_e"]),
            matrix_from_literal(data["rho_se"]),
            tuple(float(t) for t in data["times"]),
            tuple(matrix_from_literal(u) for u in data["interval_unitaries"]),
            check=check,
        )


def spec_from_evolution(rho_se, fam: EvolutionFamily, times: Sequence[float], d_s: int) -> ProcessTensorSpec:
    """Build a spec from an evolution family on ``system ⊗ environment``."""
    times = check_times(times)
    d = fam.total_dim
    if d % d_s:
        raise DimensionError(f"system dimension {d_s} does not divide the process dimension {d}")
    starts = (0.0, *times[:-1])
    unitaries = tuple(fam.propagator_between(a, b) for a, b in zip(starts, times))
    return ProcessTensorSpec(d_s, d // d_s, as_matrix(rho_se), times, unitaries)


def random_spec(d_s: int, d_e: int, n: int, rng: np.random.Generator, correlated: bool = True) -> ProcessTensorSpec:
    """Random dilation; ``correlated=False`` gives a product initial state."""
    if correlated:
        rho = random_density(d_s * d_e, rng)
    else:
        rho = np.kron(random_density(d_s, rng), random_density(d_e, rng))
    times = tuple(np.cumsum(rng.uniform(0.1, 1.0, size=n)))
    unitaries = tuple(random_unitary(d_s * d_e, rng) for _ in range(n))
    return ProcessTensorSpec(d_s, d_e, rho, times, unitaries)


# -- operation sequences ----------------------------------------------------

@dataclass(frozen=True)
class OperationSequence:
    """Finite non-negative combination ``Σ_r α_r O_{1,r} ⊗ ... ⊗ O_{n,r}``."""

    terms: tuple[tuple[float, tuple[QuantumOperation, ...]], ...]

    def __post_init__(self):
        terms = tuple((float(w), tuple(ops)) for w, ops in self.terms)
        if not terms:
            raise ValueError("an operation sequence needs at least one term")
        lengths = {len(ops) for _, ops in terms}
        if len(lengths) != 1:
            raise ValueError("all terms need the same number of slots")
        if any(not np.isfinite(w) or w < 0 for w, _ in terms):
            raise ValueError("term weights must be finite and non-negative")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def elementary(cls, ops: Sequence[QuantumOperation]) -> "OperationSequence":
        return cls(((1.0, tuple(ops)),))

    @property
    def n_slots(self) -> int:
        return len(self.terms[0][1])

    def is_elementary(self) -> bool:
        return len(self.terms) == 1 and self.terms[0][0] == 1.0


Sequenceish = Union[OperationSequence, Sequence[QuantumOperation]]


def _as_sequence(seq: Sequenceish) -> OperationSequence:
    return seq if isinstance(seq, OperationSequence) else OperationSequence.elementary(seq)


def _evolve(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ dag(u)


def _check_slots(spec: ProcessTensorSpec, ops: Sequence[QuantumOperation]) -> None:
    if len(ops) != spec.n:
        raise ValueError(f"{len(ops)} operations for {spec.n} slots")
    for j, op in enumerate(ops):
        if op.dim != spec.d_s:
            raise DimensionError(f"slot {j} operation acts on dimension {op.dim}, system has {spec.d_s}")


def joint_state(spec: ProcessTensorSpec, ops: Sequence[QuantumOperation]) -> np.ndarray:
    """Unnormalised ``system ⊗ environment`` state after the last slot."""
    _check_slots(spec, ops)
    rho = spec.rho_se
    for u, op in zip(spec.interval_unitaries, ops):
        rho = apply_ampliated(op, _evolve(u, rho), spec.d_e)
    return rho


def evaluate(spec: ProcessTensorSpec, seq: Sequenceish) -> np.ndarray:
    """Unnormalised system state produced by an operation sequence."""
    seq = _as_sequence(seq)
    out = np.zeros((spec.d_s, spec.d_s), dtype=complex)
    for w, ops in seq.terms:
        out += w * partial_trace(joint_state(spec, ops), [spec.d_s, spec.d_e], [0])
    return out


def _chosen_ops(spec, instruments: Sequence[QuantumInstrument], outcomes: Sequence[str]) -> list[QuantumOperation]:
    if len(instruments) != spec.n or len(outcomes) != spec.n:
        raise ValueError(f"need {spec.n} instruments and outcomes, got {len(instruments)} and {len(outcomes)}")
    return [instr[str(lab)] for instr, lab in zip(instruments, outcomes)]


def outcome_probability(spec: ProcessTensorSpec, instruments: Sequence[QuantumInstrument], outcomes: Sequence[str]) -> float:
    return float(np.trace(evaluate(spec, _chosen_ops(spec, instruments, outcomes))).real)


def conditional_state(
    spec: ProcessTensorSpec,
    instruments: Sequence[QuantumInstrument],
    outcomes: Sequence[str],
    floor: float = PROBABILITY_FLOOR,
) -> np.ndarray:
    sigma = evaluate(spec, _chosen_ops(spec, instruments, outcomes))
    p = float(np.trace(sigma).real)
    if p <= floor:
        raise ZeroProbabilityError(f"outcome string {list(outcomes)} has probability {p:.3g} below the floor {floor:g}")
    return sigma / p


def outcome_distribution(
    spec: ProcessTensorSpec, instruments: Sequence[QuantumInstrument], cap: int = MAX_TREE_LEAVES
) -> dict[tuple[str, ...], float]:
    """Probability of every outcome string, expanded depth first."""
    if len(instruments) != spec.n:
        raise ValueError(f"need {spec.n} instruments, got {len(instruments)}")
    leaves = int(np.prod([len(i) for i in instruments])) if instruments else 1
    if leaves > cap:
        raise ValueError(f"outcome tree has {leaves} leaves, above the cap {cap}")
    out: dict[tuple[str, ...], float] = {}

    def walk(k, rho, prefix):
        if k == spec.n:
            out[prefix] = float(np.trace(rho).real)
            return
        evolved = _evolve(spec.interval_unitaries[k], rho)
        for label, op in instruments[k].outcomes.items():
            walk(k + 1, apply_ampliated(op, evolved, spec.d_e), prefix + (label,))

    walk(0, spec.rho_se, ())
    return out


# -- Choi state -------------------------------------------------------------

@dataclass(frozen=True)
class ChoiState:
    matrix: np.ndarray
    d_s: int
    n: int

    @property
    def leg_layout(self) -> list[str]:
        legs = ["final"]
        for j in range(1, self.n + 1):
            legs += [f"in_{j}", f"out_{j}"]
        return legs

    def to_json(self) -> dict:
        return {
            "d_s": self.d_s,
            "n": self.n,
            "leg_layout": self.leg_layout,
            "matrix": matrix_to_literal(self.matrix),
        }


def choi_state(spec: ProcessTensorSpec, cap: int = MAX_DIM) -> ChoiState:
    d, de, n = spec.d_s, spec.d_e, spec.n
    check_dim_cap(d ** (2 * n + 1), cap)
    eye = np.eye(d, dtype=complex)
    rho = spec.rho_se
    d_legs = 1
    for u in spec.interval_unitaries:
        big_u = np.kron(u, np.eye(d_legs))
        rho = big_u @ rho @ dag(big_u)
        t = rho.reshape(d, de, d_legs, d, de, d_legs)
        # old system -> new input leg; new system entangled with new output leg
        t = np.einsum("ielIEL,so,SO->selioSELIO", t, eye, eye)
        d_legs *= d * d
        rho = t.reshape(d * de * d_legs, d * de * d_legs)
    ups = partial_trace(rho, [d, de, d_legs], [0, 2])
    return ChoiState(ups, d, n)


def _link_operator(op: QuantumOperation) -> np.ndarray:
    d = op.dim
    return permute_factors(op.choi().T, [d, d], [1, 0])


def contract_choi(choi: ChoiState, seq: Sequenceish) -> np.ndarray:
    """Output system state obtained by contracting the Choi state with operations."""
    seq = _as_sequence(seq)
    if seq.n_slots != choi.n:
        raise ValueError(f"{seq.n_slots} operations for a {choi.n}-slot Choi state")
    d = choi.d_s
    dims = [d] * (2 * choi.n + 1)
    out = np.zeros((d, d), dtype=complex)
    for w, ops in seq.terms:
        m = tensor_all([np.eye(d)] + [_link_operator(op) for op in ops])
        out += w * partial_trace(choi.matrix @ m, dims, [0])
    return out


# -- audit ------------------------------------------------------------------

@dataclass(frozen=True)
class PropertyReport:
    trace_bound_margin: float
    choi_min_eigenvalue: float
    containment_deviation: float
    structural_problems: tuple[str, ...]
    trials: int
    tol: float

    @property
    def trace_bound_ok(self) -> bool:
        return self.trace_bound_margin <= self.tol

    @property
    def complete_positivity_ok(self) -> bool:
        return self.choi_min_eigenvalue >= -self.tol

    @property
    def containment_ok(self) -> bool:
        return self.containment_deviation <= self.tol

    @property
    def passed(self) -> bool:
        return self.trace_bound_ok and self.complete_positivity_ok and self.containment_ok and not self.structural_problems

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "trace_bound_margin": self.trace_bound_margin,
            "trace_bound_ok": self.trace_bound_ok,
            "choi_min_eigenvalue": self.choi_min_eigenvalue,
            "complete_positivity_ok": self.complete_positivity_ok,
            "containment_deviation": self.containment_deviation,
            "containment_ok": self.containment_ok,
            "structural_problems": list(self.structural_problems),
            "trials": self.trials,
            "tol": self.tol,
        }


def _random_sequence(spec: ProcessTensorSpec, rng: np.random.Generator) -> OperationSequence:
    d = spec.d_s
    n_terms = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(n_terms))
    terms = []
    for w in weights:
        ops = []
        for _ in range(spec.n):
            if rng.random() < 0.2:
                ops.append(QuantumOperation.identity(d))
            else:
                ops.append(QuantumOperation(tuple(random_operation_kraus(d, rng, int(rng.integers(1, 3))))))
        terms.append((w, tuple(ops)))
    return OperationSequence(tuple(terms))


def containment_deviation(spec: ProcessTensorSpec, keep: Sequence[int], ops: Sequence[QuantumOperation]) -> float:
    """Distance between the restricted process and the full one padded with identities.

    The outputs are compared as operators when the last time is kept.
    Otherwise the full process keeps evolving system and environment after
    the last kept time, so only the traces can agree and those are compared.
    """
    keep = sorted(set(keep))
    sub = evaluate(spec.restrict(keep), ops)
    padded = [QuantumOperation.identity(spec.d_s)] * spec.n
    for k, op in zip(keep, ops):
        padded[k] = op
    full = evaluate(spec, padded)
    if keep[-1] == spec.n - 1:
        return float(np.linalg.norm(sub - full, 2))
    return float(abs(np.trace(sub) - np.trace(full)))


def audit_properties(
    spec: ProcessTensorSpec, trials: int = 20, rng: np.random.Generator | None = None, tol: float = 1e-8
) -> PropertyReport:
    """Sample the trace bound, complete positivity and containment of ``spec``."""
    rng = np.random.default_rng(0) if rng is None else rng
    d = spec.d_s
    ident = OperationSequence.elementary([QuantumOperation.identity(d)] * spec.n)
    trace_margin = float(np.trace(evaluate(spec, ident)).real) - 1.0
    for _ in range(trials):
        trace_margin = max(trace_margin, float(np.trace(evaluate(spec, _random_sequence(spec, rng))).real) - 1.0)

    choi_min = min_eigenvalue(choi_state(spec).matrix) if spec.n else min_eigenvalue(evaluate(spec, ident))

    subsets = [list(c) for m in range(1, spec.n) for c in itertools.combinations(range(spec.n), m)]
    contain = 0.0
    if subsets:
        for _ in range(trials):
            keep = subsets[int(rng.integers(0, len(subsets)))]
            ops = [QuantumOperation(tuple(random_operation_kraus(d, rng))) for _ in keep]
            contain = max(contain, containment_deviation(spec, keep, ops))

    return PropertyReport(trace_margin, choi_min, contain, tuple(spec.structural_problems()), trials, tol)
