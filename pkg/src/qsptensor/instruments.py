"""Quantum operations and finite-outcome quantum instruments in Kraus form."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .config import resolve_tol
from .linalg import (
    DimensionError,
    SpectralDecomposition,
    as_matrix,
    choi_of_operation,
    dag,
    eigenvalue_label,
    min_eigenvalue,
    spectral,
)
from .serialization import matrix_from_literal, matrix_to_literal


@dataclass(frozen=True)
class QuantumOperation:
    """Completely positive map ``rho -> Σ_k K_k rho K_k*``.

    Complete positivity is automatic in Kraus form; trace non-increase is
    reported by :func:`validate` rather than enforced here, so that
    deliberately invalid operations can be represented and audited.
    """

    kraus: tuple[np.ndarray, ...]
    label: str | None = None

    def __post_init__(self):
        ks = tuple(as_matrix(k, "Kraus operator") for k in self.kraus)
        if not ks:
            raise ValueError("a quantum operation needs at least one Kraus operator")
        d = ks[0].shape[0]
        if any(k.shape != (d, d) for k in ks):
            raise DimensionError("Kraus operators have mixed dimensions")
        object.__setattr__(self, "kraus", ks)

    @classmethod
    def identity(cls, d: int) -> "QuantumOperation":
        return cls((np.eye(d, dtype=complex),), "Id")

    @classmethod
    def sandwich(cls, w, label: str | None = None) -> "QuantumOperation":
        """Single-Kraus map ``rho -> w rho w*``."""
        return cls((as_matrix(w),), label)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    def effect(self) -> np.ndarray:
        """``Σ_k K_k* K_k``."""
        return sum(dag(k) @ k for k in self.kraus)

    def choi(self) -> np.ndarray:
        return choi_of_operation(self.kraus, self.dim)

    def __call__(self, rho) -> np.ndarray:
        return apply_operation(self, rho)


def apply_operation(op: QuantumOperation, rho) -> np.ndarray:
    rho = as_matrix(rho, "state")
    if rho.shape[0] != op.dim:
        raise DimensionError(f"operation acts on dimension {op.dim}, state has {rho.shape[0]}")
    return sum(k @ rho @ dag(k) for k in op.kraus)


def apply_ampliated(op: QuantumOperation, rho, d_rest: int) -> np.ndarray:
    """Apply ``op ⊗ Id`` to a state on ``system ⊗ rest``."""
    d = op.dim
    t = np.asarray(rho, dtype=complex).reshape(d, d_rest, d, d_rest)
    out = np.zeros_like(t)
    for k in op.kraus:
        out += np.einsum("ai,ixjy,bj->axby", k, t, k.conj())
    return out.reshape(d * d_rest, d * d_rest)


@dataclass(frozen=True)
class QuantumInstrument:
    """Finite family of operations indexed by string outcome labels."""

    outcomes: Mapping[str, QuantumOperation] = field(default_factory=dict)

    def __post_init__(self):
        ops = {str(k): v for k, v in dict(self.outcomes).items()}
        dims = {op.dim for op in ops.values()}
        if len(dims) > 1:
            raise DimensionError(f"instrument outcomes act on different dimensions {sorted(dims)}")
        object.__setattr__(self, "outcomes", ops)

    @property
    def labels(self) -> list[str]:
        return list(self.outcomes)

    @property
    def dim(self) -> int:
        if not self.outcomes:
            raise ValueError("empty instrument has no dimension")
        return next(iter(self.outcomes.values())).dim

    def __getitem__(self, label: str) -> QuantumOperation:
        try:
            return self.outcomes[label]
        except KeyError:
            raise KeyError(f"unknown outcome label {label!r}; known: {self.labels}") from None

    def __len__(self) -> int:
        return len(self.outcomes)

    def projectors(self) -> list[np.ndarray] | None:
        """Projectors if every outcome is a single projector Kraus operator, else ``None``."""
        out = []
        for op in self.outcomes.values():
            if len(op.kraus) != 1:
                return None
            k = op.kraus[0]
            if np.max(np.abs(k - dag(k))) > 1e-9 or np.max(np.abs(k @ k - k)) > 1e-9:
                return None
            out.append(k)
        return out

    @classmethod
    def trivial(cls, d: int) -> "QuantumInstrument":
        return cls({"id": QuantumOperation.identity(d)})

    def to_json(self) -> dict:
        return {
            "outcomes": {
                label: {"kraus": [matrix_to_literal(k) for k in op.kraus]}
                for label, op in self.outcomes.items()
            }
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "QuantumInstrument":
        if not isinstance(data, Mapping) or not isinstance(data.get("outcomes"), Mapping):
            raise ValueError('instrument JSON needs an "outcomes" object')
        ops = {}
        for label, entry in data["outcomes"].items():
            if not isinstance(entry, Mapping) or "kraus" not in entry:
                raise ValueError(f'outcome {label!r} needs a "kraus" list')
            ops[label] = QuantumOperation(tuple(matrix_from_literal(k) for k in entry["kraus"]), label)
        return cls(ops)


def projective_instrument(observable) -> QuantumInstrument:
    """One single-projector outcome per distinct eigenvalue, labelled by the eigenvalue."""
    dec = observable if isinstance(observable, SpectralDecomposition) else spectral(observable)
    return QuantumInstrument(
        {eigenvalue_label(lam): QuantumOperation((p,), eigenvalue_label(lam)) for lam, p in zip(dec.eigenvalues, dec.projectors)}
    )


def instrument_from_projectors(projectors: Sequence[np.ndarray], labels: Sequence[str] | None = None) -> QuantumInstrument:
    labels = [str(i) for i in range(len(projectors))] if labels is None else list(labels)
    if len(labels) != len(projectors):
        raise ValueError("one label per projector is required")
    return QuantumInstrument({lab: QuantumOperation((p,), lab) for lab, p in zip(labels, projectors)})


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    normalization_deviation: float
    #: smallest eigenvalue of ``I - Σ K*K`` per outcome (negative = trace increasing)
    trace_margins: dict[str, float]
    #: smallest eigenvalue of the Choi matrix per outcome
    choi_margins: dict[str, float]
    tol: float
    messages: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "normalization_deviation": self.normalization_deviation,
            "trace_margins": self.trace_margins,
            "choi_margins": self.choi_margins,
            "tol": self.tol,
            "messages": list(self.messages),
        }


def validate(instr: QuantumInstrument, tol: float | None = None) -> ValidationReport:
    tol = resolve_tol(tol)
    msgs = []
    if not instr.outcomes:
        return ValidationReport(False, float("inf"), {}, {}, tol, ("instrument has no outcomes; normalization is unreachable",))
    d = instr.dim
    total = np.zeros((d, d), dtype=complex)
    trace_margins = {}
    choi_margins = {}
    for label, op in instr.outcomes.items():
        eff = op.effect()
        total += eff
        trace_margins[label] = min_eigenvalue(np.eye(d) - eff)
        choi_margins[label] = min_eigenvalue(op.choi())
        if trace_margins[label] < -tol:
            msgs.append(f"outcome {label!r} is trace increasing (margin {trace_margins[label]:.3g})")
        if choi_margins[label] < -tol:
            msgs.append(f"outcome {label!r} has a non-positive Choi matrix")
    deviation = float(np.linalg.norm(total - np.eye(d), 2))
    if deviation > tol:
        msgs.append(f"sum of effects deviates from identity by {deviation:.3g}")
    return ValidationReport(not msgs, deviation, trace_margins, choi_margins, tol, tuple(msgs))
