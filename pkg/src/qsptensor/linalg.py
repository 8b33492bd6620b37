"""Dense complex matrix substrate.

Matrices are plain ``numpy`` arrays of ``complex128``.  Tensor products use
the Kronecker ordering: for ``a ⊗ b`` the index of ``a`` is the major one,
so basis vector ``|i⟩|j⟩`` sits at position ``i * dim(b) + j``.  Every
composite space in the package (system ⊗ environment, ancilla ⊗ system ⊗
environment, Choi legs) follows this convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .config import EIGENVALUE_MERGE_TOL, MAX_DIM, resolve_tol


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotHermitianError(ValueError):
    """A Hermitian matrix was required."""


I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a square complex array, raising on any other shape."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    return arr


def dim(m: np.ndarray) -> int:
    return as_matrix(m).shape[0]


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def check_dim_cap(d: int, cap: int | None = None) -> None:
    cap = MAX_DIM if cap is None else cap
    if d > cap:
        raise DimensionError(f"dimension {d} exceeds the configured cap {cap}")


# -- structural predicates -------------------------------------------------

def is_hermitian(m, tol: float | None = None) -> bool:
    m = as_matrix(m)
    return bool(np.max(np.abs(m - dag(m))) <= resolve_tol(tol))


def is_unitary(m, tol: float | None = None) -> bool:
    m = as_matrix(m)
    eye = np.eye(m.shape[0])
    return bool(np.max(np.abs(dag(m) @ m - eye)) <= resolve_tol(tol))


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of the Hermitian part of ``m``."""
    m = as_matrix(m)
    return float(np.linalg.eigvalsh(0.5 * (m + dag(m)))[0])


def is_psd(m, tol: float | None = None) -> bool:
    tol = resolve_tol(tol)
    return is_hermitian(m, tol) and min_eigenvalue(m) >= -tol


def is_projector(m, tol: float | None = None) -> bool:
    m = as_matrix(m)
    tol = resolve_tol(tol)
    return is_hermitian(m, tol) and bool(np.max(np.abs(m @ m - m)) <= tol)


def is_density(m, tol: float | None = None) -> bool:
    tol = resolve_tol(tol)
    return is_psd(m, tol) and abs(np.trace(as_matrix(m)) - 1) <= tol


def op_norm(m) -> float:
    """Operator (spectral) norm."""
    return float(np.linalg.norm(np.asarray(m, dtype=complex), 2))


# -- products and traces ---------------------------------------------------

def tensor(a, b, *rest) -> np.ndarray:
    """Kronecker product ``a ⊗ b ⊗ ...`` in the canonical ordering."""
    return reduce(np.kron, (as_matrix(x) for x in (a, b, *rest)))


def tensor_all(ms: Iterable[np.ndarray]) -> np.ndarray:
    ms = list(ms)
    if not ms:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, (as_matrix(x) for x in ms))


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every tensor factor of ``m`` not listed in ``keep``.

    Parameters
    ----------
    m : array_like
        Square matrix on ``dims[0] ⊗ dims[1] ⊗ ...``.
    dims : sequence of int
        Factor dimensions; their product must equal ``dim(m)``.
    keep : iterable of int
        Indices of the factors to keep.  The result is ordered by factor
        index, regardless of the order given here.
    """
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    if any(d <= 0 for d in dims) or int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"factor dimensions {dims} do not multiply to {m.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep={keep} is not a nonempty subset of factors 0..{len(dims) - 1}")

    t = m.reshape(dims + dims)
    n = len(dims)
    for k in reversed(range(len(dims))):
        if k in keep:
            continue
        t = np.trace(t, axis1=k, axis2=k + n)
        n -= 1
    d_out = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d_out, d_out)


def ptrace_last(m, d_first: int, d_last: int) -> np.ndarray:
    """Shortcut for tracing out the second factor of a bipartite matrix."""
    return partial_trace(m, [d_first, d_last], [0])


def permute_factors(m, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of ``m``; factor ``order[k]`` moves to slot ``k``."""
    m = as_matrix(m)
    dims = list(dims)
    n = len(dims)
    t = m.reshape(dims + dims)
    t = t.transpose(list(order) + [n + o for o in order])
    d = m.shape[0]
    return t.reshape(d, d)


# -- functional calculus ---------------------------------------------------

def expm_hermitian(h, t: float, tol: float | None = None) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``, via its eigendecomposition."""
    h = as_matrix(h, "hamiltonian")
    if not is_hermitian(h, tol):
        raise NotHermitianError("expm_hermitian requires a Hermitian generator")
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = np.linalg.eigh(0.5 * (h + dag(h)))
    return (v * np.exp(-1j * w * t)) @ dag(v)


def unitary_generator(u, tol: float | None = None) -> np.ndarray:
    """Hermitian ``h`` with ``expm_hermitian(h, 1) == u`` (principal branch).

    Uses the complex Schur form, which is diagonal with a unitary
    similarity for normal matrices even when eigenvalues are degenerate.
    """
    from scipy.linalg import schur

    u = as_matrix(u, "unitary")
    if not is_unitary(u, max(resolve_tol(tol), 1e-9)):
        raise ValueError("unitary_generator requires a unitary matrix")
    tmat, q = schur(u, output="complex")
    phases = np.angle(np.diag(tmat))
    h = -(q * phases) @ dag(q)
    return 0.5 * (h + dag(h))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues (ascending) with their orthogonal projectors."""

    eigenvalues: tuple[float, ...]
    projectors: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def reconstruct(self) -> np.ndarray:
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))

    def labels(self) -> list[str]:
        return [eigenvalue_label(lam) for lam in self.eigenvalues]


def eigenvalue_label(value: float) -> str:
    """Stable string label for a measured eigenvalue, e.g. ``-1`` or ``0.5``."""
    v = round(float(value), 8) + 0.0
    return format(v, ".8g")


def spectral(h, merge_tol: float = EIGENVALUE_MERGE_TOL, tol: float | None = None) -> SpectralDecomposition:
    """Spectral projectors of a Hermitian matrix.

    Eigenvalues closer than ``merge_tol`` to their predecessor in ascending
    order are merged into a single outcome whose value is the cluster mean.
    """
    h = as_matrix(h, "observable")
    if not is_hermitian(h, tol):
        raise NotHermitianError("spectral requires a Hermitian matrix")
    w, v = np.linalg.eigh(0.5 * (h + dag(h)))

    clusters: list[list[int]] = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[k - 1] <= merge_tol:
            clusters[-1].append(k)
        else:
            clusters.append([k])

    eigenvalues = []
    projectors = []
    for idx in clusters:
        vecs = v[:, idx]
        eigenvalues.append(float(np.mean(w[idx])))
        projectors.append(vecs @ dag(vecs))
    return SpectralDecomposition(tuple(eigenvalues), tuple(projectors))


# -- Choi matrices ---------------------------------------------------------

def max_entangled(d: int) -> np.ndarray:
    """Unnormalised ``|Φ⟩ = Σ_i |i⟩|i⟩`` as a length ``d²`` vector."""
    return np.eye(d, dtype=complex).reshape(-1)


def choi_of_operation(kraus: Sequence[np.ndarray], d: int) -> np.ndarray:
    """Choi matrix ``Σ_k (K_k ⊗ I)|Φ⟩⟨Φ|(K_k ⊗ I)*`` with unnormalised ``|Φ⟩``.

    The first tensor factor is the output of the map, the second the
    reference copy of its input, so ``C[(a, i), (b, j)] = O(|i⟩⟨j|)[a, b]``.
    """
    out = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        k = as_matrix(k, "Kraus operator")
        if k.shape != (d, d):
            raise DimensionError(f"Kraus operator of shape {k.shape} does not act on dimension {d}")
        vec = k.reshape(-1)
        out += np.outer(vec, vec.conj())
    return out


def apply_choi(choi, x) -> np.ndarray:
    """Apply the map with Choi matrix ``choi`` (output ⊗ input legs) to ``x``."""
    x = as_matrix(x)
    d = x.shape[0]
    c = as_matrix(choi).reshape(d, d, d, d)
    return np.einsum("aibj,ij->ab", c, x)
