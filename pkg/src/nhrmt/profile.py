"""Variance profiles: construction, normalization and Perron-Frobenius data.

A variance profile is the nonnegative matrix ``S`` with ``s_ij = E|x_ij|^2``.
Vectors of length ``n`` stand in for diagonal matrices throughout, so the
operators ``T -> diag(S t)`` and ``T -> diag(S^T t)`` act on plain arrays.

Averages and inner products are normalized by ``n``::

    <x>    = mean(x)
    <x, y> = mean(conj(x) * y)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.linalg as la
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, ProfileError, SingularityError

PROFILE_KINDS = ("constant", "row-stochastic-random", "two-block", "from-file")

# dense eigensolver fallback for the Perron pair is allowed up to this size
DENSE_FALLBACK_MAX_N = 512


def avg(x):
    return np.mean(x)


def inner(x, y):
    return np.mean(np.conj(x) * y)


@dataclass(frozen=True, eq=False)
class VarianceProfile:
    """Nonnegative ``n x n`` matrix of entry variances.

    The constructor validates the matrix but does not rescale it; use
    :func:`normalize_profile` (or :func:`build_profile`) to get ``rho(S) = 1``.
    """

    s: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        s = np.array(self.s, dtype=float, copy=True)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ProfileError(f"variance profile must be square, got shape {s.shape}")
        if s.shape[0] < 1:
            raise ProfileError("variance profile must be non-empty")
        if not np.all(np.isfinite(s)):
            raise ProfileError("variance profile has non-finite entries")
        if np.any(s < 0):
            raise ProfileError("variance profile has negative entries")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @cached_property
    def rho(self) -> float:
        """Spectral radius of ``s``."""
        return float(np.max(np.abs(np.linalg.eigvals(self.s))))

    def is_irreducible(self) -> bool:
        return is_irreducible(self.s)

    def __repr__(self):
        return f"VarianceProfile(name={self.name!r}, n={self.n})"


@dataclass(frozen=True, eq=False)
class PerronPair:
    """Positive left/right Perron eigenvectors, normalized so that
    ``<v_r> = 1`` and ``<v_l, v_r> = 1``."""

    v_l: np.ndarray
    v_r: np.ndarray
    eigenvalue: float = 1.0
    method: str = field(default="power", compare=False)

    @property
    def c_s(self) -> float:
        """Scale-invariant constant ``<v_l><v_r> / <v_l, v_r>``."""
        return float(avg(self.v_l) * avg(self.v_r) / inner(self.v_l, self.v_r).real)


def is_irreducible(s) -> bool:
    """Strong connectivity of the sparsity pattern of ``s``."""
    pattern = np.asarray(s) > 0
    ncomp = connected_components(pattern, directed=True, connection="strong",
                                 return_labels=False)
    return ncomp == 1


def normalize_profile(p: VarianceProfile) -> VarianceProfile:
    """Rescale ``p`` to unit spectral radius."""
    rho = p.rho
    if not rho > 0:
        raise ProfileError("cannot normalize a profile with zero spectral radius")
    return VarianceProfile(p.s / rho, name=p.name)


def read_profile_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append([float(c) for c in row])
    s = np.array(rows, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ProfileError(f"profile file {path} is not a square matrix")
    return s


def write_profile_csv(p: VarianceProfile, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in p.s:
            writer.writerow([repr(float(v)) for v in row])
    return path


def _two_block(n, within, across, sizes=None):
    if sizes is None:
        sizes = (n // 2, n - n // 2)
    sizes = tuple(int(k) for k in sizes)
    if len(sizes) != 2 or min(sizes) < 1 or sum(sizes) != n:
        raise ProfileError(f"two-block sizes {sizes} must be two positive ints summing to n={n}")
    if within < 0 or across < 0:
        raise ProfileError("two-block weights must be nonnegative")
    labels = np.repeat([0, 1], sizes)
    same = labels[:, None] == labels[None, :]
    return np.where(same, within, across) / n


def build_profile(kind: str, n: int | None = None, params: dict | None = None,
                  seed: int = 0) -> VarianceProfile:
    """Construct an admissible, normalized variance profile.

    Parameters
    ----------
    kind : {"constant", "row-stochastic-random", "two-block", "from-file"}
    n : int
        Dimension. Ignored for ``from-file`` (taken from the file).
    params : dict, optional
        ``row-stochastic-random``: ``low``, ``high`` bounds of the uniform raw
        entries (default 0.5, 1.5).
        ``two-block``: ``within``, ``across`` weights and optional ``sizes``.
        ``from-file``: ``path`` to a CSV matrix.
    seed : int
        Seed for the random kinds.
    """
    params = dict(params or {})
    if kind == "from-file":
        s = read_profile_csv(params["path"])
        n = s.shape[0]
    else:
        if n is None or int(n) != n or n < 2:
            raise ProfileError(f"profile dimension must be an integer >= 2, got {n!r}")
        n = int(n)
    if kind == "constant":
        s = np.full((n, n), 1.0 / n)
        # already normalized: rank one, row sums equal to one
        return VarianceProfile(s, name="constant")
    elif kind == "row-stochastic-random":
        low, high = float(params.get("low", 0.5)), float(params.get("high", 1.5))
        if not 0 <= low < high:
            raise ProfileError("need 0 <= low < high for row-stochastic-random")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5eed])))
        raw = rng.uniform(low, high, size=(n, n))
        s = raw / raw.sum(axis=1, keepdims=True)
    elif kind == "two-block":
        s = _two_block(n, float(params.get("within", 0.3)), float(params.get("across", 0.1)),
                       params.get("sizes"))
    elif kind != "from-file":
        raise ProfileError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")

    if not is_irreducible(s):
        raise ProfileError(f"{kind} profile is reducible")
    return normalize_profile(VarianceProfile(s, name=kind))


def _power_iteration(mat, tol, budget):
    # (I + S)/2 shares the Perron vector of S and is aperiodic
    n = mat.shape[0]
    shifted = 0.5 * (mat + np.eye(n))
    v = np.full(n, 1.0)
    for it in range(1, budget + 1):
        w = shifted @ v
        w /= w.sum() / n
        if np.max(np.abs(w - v)) <= tol * np.max(np.abs(w)):
            return w, it
        v = w
    return None, budget


def _dense_perron(mat):
    vals, vecs = np.linalg.eig(mat)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    return v / v.mean()


def perron_vectors(p: VarianceProfile, tol: float = 1e-12,
                   max_iter: int | None = None) -> PerronPair:
    """Left and right Perron eigenvectors of ``S / rho(S)``.

    Shifted power iteration on ``S`` and ``S^T`` with a dense eigensolver
    fallback for ``n <= 512``. The pair is returned with ``<v_r> = 1`` and
    ``<v_l, v_r> = 1``.

    Raises
    ------
    ConvergenceError
        If power iteration fails to converge and no fallback is allowed, or the
        final residuals exceed ``1e-10``.
    """
    n = p.n
    rho = p.rho
    if not rho > 0:
        raise ProfileError("profile has zero spectral radius")
    s = p.s / rho
    budget = max_iter if max_iter is not None else int(10 * n * max(math.log(n), 1.0))

    method = "power"
    v_r, _ = _power_iteration(s, tol, budget)
    v_l, _ = _power_iteration(s.T, tol, budget)
    if v_r is None or v_l is None or not _residuals_ok(s, v_l, v_r):
        if n > DENSE_FALLBACK_MAX_N:
            raise ConvergenceError(
                f"power iteration did not converge in {budget} iterations "
                "(profile reducible or slowly mixing)", iterations=budget)
        method = "dense"
        v_r = _dense_perron(s)
        v_l = _dense_perron(s.T)

    if np.any(v_r <= 0) or np.any(v_l <= 0):
        raise ConvergenceError("Perron vectors are not strictly positive; profile reducible?")
    v_r = v_r / avg(v_r)
    v_l = v_l / inner(v_l, v_r).real
    if not _residuals_ok(s, v_l, v_r):
        raise ConvergenceError("Perron residual above 1e-10")
    return PerronPair(v_l=v_l, v_r=v_r, eigenvalue=rho, method=method)


def _residuals_ok(s, v_l, v_r, tol=1e-10):
    r_ok = np.linalg.norm(s @ v_r - v_r) <= tol * np.linalg.norm(v_r)
    l_ok = np.linalg.norm(s.T @ v_l - v_l) <= tol * np.linalg.norm(v_l)
    return bool(r_ok and l_ok)


def _check_dim(p, d):
    d = np.asarray(d)
    if d.shape != (p.n,):
        raise ValueError(f"expected a vector of length {p.n}, got shape {d.shape}")
    return d


def apply_S(p: VarianceProfile, d) -> np.ndarray:
    """Diagonal of ``S[diag(d)]``: ``out_i = sum_k s_ik d_k``."""
    return p.s @ _check_dim(p, d)


def apply_S_adjoint(p: VarianceProfile, d) -> np.ndarray:
    """Diagonal of ``S*[diag(d)]``: ``out_i = sum_k s_ki d_k``."""
    return p.s.T @ _check_dim(p, d)


def project_Q(pp: PerronPair, r) -> np.ndarray:
    """Spectral projection onto the complement of the Perron eigenvalue."""
    r = np.asarray(r)
    if r.shape != pp.v_r.shape:
        raise ValueError(f"expected a vector of length {pp.v_r.size}, got shape {r.shape}")
    return r - (inner(pp.v_l, r) / inner(pp.v_l, pp.v_r)) * pp.v_r


def q_matrix(pp: PerronPair) -> np.ndarray:
    n = pp.v_r.size
    return np.eye(n) - np.outer(pp.v_r, pp.v_l) / (n * inner(pp.v_l, pp.v_r).real)


def subdominant_modulus(p: VarianceProfile) -> float:
    """Second largest eigenvalue modulus of ``S / rho(S)``."""
    vals = np.sort(np.abs(np.linalg.eigvals(p.s / p.rho)))
    return float(vals[-2]) if vals.size > 1 else 0.0


@dataclass
class GapCheckReport:
    max_norm: float
    passed: bool
    bound: float
    test_points: list
    norms: list

    def to_dict(self):
        return {
            "max_norm": self.max_norm,
            "pass": self.passed,
            "bound": self.bound,
            "test_points": [[float(np.real(z)), float(np.imag(z))] for z in self.test_points],
            "norms": list(map(float, self.norms)),
        }


def resolvent_gap_check(p: VarianceProfile, epsilon: float, points: Iterable[complex],
                        bound: float, pp: PerronPair | None = None,
                        cond_limit: float = 1e12) -> GapCheckReport:
    """Largest operator norm of ``Q (S - z)^{-1} Q`` over the test points.

    Every point must satisfy ``|z| >= 1 - 2*epsilon`` and ``|z - 1| >= epsilon``.
    A point that makes ``S - z`` numerically singular raises
    :class:`SingularityError` instead of being skipped.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    pp = pp or perron_vectors(p)
    s = p.s / p.rho
    q = q_matrix(pp)
    eye = np.eye(p.n)
    pts = [complex(z) for z in points]
    if not pts:
        raise ValueError("no test points given")
    norms = []
    for z in pts:
        if abs(z) < 1 - 2 * epsilon:
            raise ValueError(f"test point {z} lies inside |z| < 1 - 2*epsilon")
        if abs(z - 1) < epsilon:
            raise ValueError(f"test point {z} lies within epsilon of the Perron eigenvalue")
        a = s - z * eye
        cond = np.linalg.cond(a)
        if not np.isfinite(cond) or cond > cond_limit:
            raise SingularityError(f"S - z is near-singular at z={z} (cond={cond:.3e})", cond=cond)
        res = la.solve(a, q)
        norms.append(float(np.linalg.norm(q @ res, 2)))
    max_norm = max(norms)
    return GapCheckReport(max_norm=max_norm, passed=bool(max_norm <= bound), bound=float(bound),
                          test_points=pts, norms=norms)


def circle_points(radius: float, count: int, exclude_near: complex = 1.0,
                  min_distance: float = 0.0) -> list:
    """Equispaced points on a circle, dropping those within ``min_distance`` of
    ``exclude_near``."""
    theta = 2 * np.pi * np.arange(count) / count
    pts = radius * np.exp(1j * theta)
    return [complex(z) for z in pts if abs(z - exclude_near) >= min_distance]


__all__ = [
    "PROFILE_KINDS", "VarianceProfile", "PerronPair", "GapCheckReport",
    "avg", "inner", "is_irreducible", "normalize_profile", "build_profile",
    "read_profile_csv", "write_profile_csv", "perron_vectors", "apply_S",
    "apply_S_adjoint", "project_Q", "q_matrix", "subdominant_modulus",
    "resolvent_gap_check", "circle_points",
]
