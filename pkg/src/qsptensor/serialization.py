"""JSON literals for matrices and fixed-precision number formatting.

A matrix literal is a row-major nested list whose entries are ``[re, im]``
pairs.  Plain real numbers are accepted on input as a convenience.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

SIGNIFICANT_DIGITS = 12


class LiteralError(ValueError):
    """Malformed matrix literal."""


def fmt_float(x: float) -> float:
    """Round to 12 significant digits so reports are byte-stable."""
    x = float(x)
    if not math.isfinite(x):
        return x
    out = float(f"{x:.{SIGNIFICANT_DIGITS}g}")
    return out + 0.0  # no negative zero


def complex_to_pair(z: complex) -> list[float]:
    z = complex(z)
    return [fmt_float(z.real), fmt_float(z.imag)]


def _entry(value: Any) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value, 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(value[0], value[1])
    raise LiteralError(f"matrix entry must be a number or a [re, im] pair, got {value!r}")


def matrix_from_literal(lit: Any) -> np.ndarray:
    if not isinstance(lit, list) or not lit or not all(isinstance(row, list) for row in lit):
        raise LiteralError("matrix literal must be a non-empty list of rows")
    n = len(lit)
    if any(len(row) != n for row in lit):
        raise LiteralError(f"matrix literal must be square; got {n} rows of lengths {[len(r) for r in lit]}")
    return np.array([[_entry(v) for v in row] for row in lit], dtype=complex)


def matrix_to_literal(m: np.ndarray) -> list[list[list[float]]]:
    m = np.asarray(m, dtype=complex)
    return [[complex_to_pair(v) for v in row] for row in m]
