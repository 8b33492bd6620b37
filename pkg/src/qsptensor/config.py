"""Numerical defaults shared across the package.

The structural tolerance can be overridden for a whole process through the
``QSPTENSOR_TOL`` environment variable; every function also accepts an
explicit ``tol`` argument that wins over both.
"""

from __future__ import annotations

import os

TOL_ENV_VAR = "QSPTENSOR_TOL"

#: Entrywise tolerance for hermiticity, unitarity, positivity, projector tests.
DEFAULT_TOL = 1e-10

#: Eigenvalues closer than this are treated as one measurement outcome.
EIGENVALUE_MERGE_TOL = 1e-8

#: Largest matrix dimension any construction may allocate.
MAX_DIM = 256

#: Conditioning on an outcome below this probability is refused.
PROBABILITY_FLOOR = 1e-12

#: Largest outcome tree the enumerator will expand.
MAX_TREE_LEAVES = 10_000

#: Largest ancilla multi-index set checked for the diagonality condition.
MAX_ANCILLA_TERMS = 64


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_TOL
    value = float(raw)
    if not value > 0:
        raise ValueError(f"{TOL_ENV_VAR} must be positive, got {raw!r}")
    return value


def resolve_tol(tol: float | None) -> float:
    return default_tol() if tol is None else float(tol)
