"""Random matrices for audits, property tests and benchmarks.

All samplers take a ``numpy.random.Generator`` so that runs are reproducible
from a single seed.
"""

from __future__ import annotations

import numpy as np

from .linalg import dag


def ginibre(d: int, rng: np.random.Generator, cols: int | None = None) -> np.ndarray:
    cols = d if cols is None else cols
    return (rng.standard_normal((d, cols)) + 1j * rng.standard_normal((d, cols))) / np.sqrt(2)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a Ginibre matrix with phase fix)."""
    q, r = np.linalg.qr(ginibre(d, rng))
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = ginibre(d, rng)
    return scale * 0.5 * (g + dag(g))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    g = ginibre(d, rng, d if rank is None else rank)
    rho = g @ dag(g)
    return rho / np.trace(rho)


def random_pure(d: int, rng: np.random.Generator) -> np.ndarray:
    v = ginibre(d, rng, 1)[:, 0]
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_projector(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = int(rng.integers(0, d + 1)) if rank is None else rank
    u = random_unitary(d, rng)[:, :rank]
    return u @ dag(u)


def random_instrument_kraus(d: int, n_outcomes: int, rng: np.random.Generator, kraus_per_outcome: int = 2) -> list[list[np.ndarray]]:
    """Kraus sets of a random instrument: blocks of an isometry ``C^d -> C^{d m k}``."""
    total = n_outcomes * kraus_per_outcome
    v = random_unitary(d * total, rng)[:, :d]
    blocks = [v[i * d:(i + 1) * d, :] for i in range(total)]
    return [blocks[o * kraus_per_outcome:(o + 1) * kraus_per_outcome] for o in range(n_outcomes)]


def random_operation_kraus(d: int, rng: np.random.Generator, n_kraus: int = 2) -> list[np.ndarray]:
    """Kraus operators of a random trace-nonincreasing CP map.

    Takes one outcome of a random three-outcome instrument, so the map is
    strictly trace decreasing in general.
    """
    return random_instrument_kraus(d, 3, rng, n_kraus)[int(rng.integers(0, 3))]
