"""Seeded samplers for random matrices with a variance profile.

Every draw comes from ``numpy.random.Philox`` (4x64, 10 rounds) keyed by a
``SeedSequence`` built from ``(seed, sample_index, stream)``, so a sample
depends only on its own indices and never on the order in which workers
produce it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .profile import VarianceProfile

LAWS = ("complex-gaussian", "real-gaussian", "rademacher", "uniform")

# stream ids keep different consumers of the same (seed, index) independent
STREAM_MATRIX = 0
STREAM_WIGNER = 1
STREAM_INITIAL = 2


def rng_for(seed: int, sample_index: int = 0, stream: int = STREAM_MATRIX) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(sample_index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EnsembleSpec:
    profile: VarianceProfile
    law: str = "complex-gaussian"
    seed: int = 0
    sample_index: int = 0

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}; expected one of {LAWS}")


def _unit_entries(law, rng, shape):
    """Centered entries with E|x|^2 = 1 (and E x^2 = 0 for the complex laws)."""
    if law == "complex-gaussian":
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        return (re + 1j * im) * np.sqrt(0.5)
    if law == "real-gaussian":
        return rng.standard_normal(shape).astype(complex)
    if law == "rademacher":
        # uniform phase from the fourth roots of unity
        k = rng.integers(0, 4, size=shape)
        return np.array([1, 1j, -1, -1j])[k]
    if law == "uniform":
        # uniform on the disk of radius sqrt(2)
        r = np.sqrt(2.0 * rng.random(shape))
        phi = 2 * np.pi * rng.random(shape)
        return r * np.exp(1j * phi)
    raise ValueError(f"unknown law {law!r}")


def sample_matrix(spec: EnsembleSpec) -> np.ndarray:
    """Draw ``X`` with independent centered entries of variance ``s_ij``."""
    rng = rng_for(spec.seed, spec.sample_index, STREAM_MATRIX)
    n = spec.profile.n
    return np.sqrt(spec.profile.s) * _unit_entries(spec.law, rng, (n, n))


def sample_wigner(n: int, seed: int, half_width: float = 1.0, sample_index: int = 0) -> np.ndarray:
    """Complex Hermitian Wigner matrix with semicircle support ``[-half_width, half_width]``.

    Entries on and above the diagonal are independent with variance
    ``half_width**2 / (4 n)``; the diagonal is real.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = rng_for(seed, sample_index, STREAM_WIGNER)
    sigma = half_width / (2.0 * np.sqrt(n))
    a = _unit_entries("complex-gaussian", rng, (n, n)) * sigma
    w = (a + a.conj().T) / np.sqrt(2.0)
    # exact Hermitian symmetry, including a real diagonal
    w = np.triu(w) + np.triu(w, 1).conj().T
    w[np.diag_indices(n)] = w.diagonal().real
    return w


def random_unit_vectors(n: int, count: int, seed: int, sample_index: int = 0) -> np.ndarray:
    """``count`` columns uniformly distributed on the complex unit sphere."""
    rng = rng_for(seed, sample_index, STREAM_INITIAL)
    u = _unit_entries("complex-gaussian", rng, (n, count))
    return u / np.linalg.norm(u, axis=0, keepdims=True)
