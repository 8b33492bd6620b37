"""Randomized verification runs over the standard small configurations.

Configurations are qubit systems (``d_s = 2``) with environments of
dimension 1 or 2 and 1 to 3 intervention times.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import bridge, process_tensor as pt
from .instruments import QuantumOperation
from .sampling import ginibre, random_operation_kraus

CONFIGS = tuple(itertools.product((1, 2, 3), (1, 2)))  # (n, d_e)


@dataclass(frozen=True)
class SuiteRow:
    n: int
    d_e: int
    instance: int
    values: dict

    def as_dict(self) -> dict:
        return {"n": self.n, "d_e": self.d_e, "instance": self.instance, **self.values}


def audit_suite(instances: int = 100, trials: int = 10, seed: int = 0, tol: float = 1e-8) -> list[SuiteRow]:
    """Property audits of ``instances`` random dilations spread over :data:`CONFIGS`."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(instances):
        n, d_e = CONFIGS[k % len(CONFIGS)]
        spec = pt.random_spec(2, d_e, n, rng, correlated=bool(k % 2 == 0 or d_e == 1))
        rep = pt.audit_properties(spec, trials, rng, tol)
        rows.append(SuiteRow(n, d_e, k, rep.to_json()))
    return rows


def choi_contraction_suite(specs: int = 6, sequences: int = 20, seed: int = 0) -> list[SuiteRow]:
    """Largest ``|tr T(O) - tr contract(Υ, O)|`` over random operation tuples, per spec."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(specs):
        n, d_e = CONFIGS[k % len(CONFIGS)]
        spec = pt.random_spec(2, d_e, n, rng)
        choi = pt.choi_state(spec)
        worst = 0.0
        worst_state = 0.0
        for _ in range(sequences):
            ops = [QuantumOperation(tuple(random_operation_kraus(2, rng, int(rng.integers(1, 4))))) for _ in range(n)]
            direct = pt.evaluate(spec, ops)
            contracted = pt.contract_choi(choi, ops)
            worst = max(worst, abs(np.trace(direct) - np.trace(contracted)))
            worst_state = max(worst_state, float(np.max(np.abs(direct - contracted))))
        rows.append(SuiteRow(n, d_e, k, {"max_trace_error": worst, "max_state_error": worst_state, "sequences": sequences}))
    return rows


def kernel_identity_suite(instances: int = 100, seed: int = 0, tol: float = 1e-8, configs=CONFIGS) -> list[SuiteRow]:
    """``instances`` random kernel-vs-process-tensor comparisons per configuration."""
    rng = np.random.default_rng(seed)
    rows = []
    for n, d_e in configs:
        for k in range(instances):
            dil = bridge.random_dilation(2, d_e, rng)
            times = bridge.random_times(n, rng)
            a = [ginibre(2, rng) for _ in range(n)]
            b = [ginibre(2, rng) for _ in range(n)]
            rep = bridge.verify_theorem1(a, b, dil, times, tol)
            rows.append(SuiteRow(n, d_e, k, rep.to_json()))
    return rows
