"""Deterministic resolvent-product kernel and the double-contour functional.

The kernel ``K(z1, z2) = <(z1 conj(z2) - S)^{-1} 1>`` predicts
``tr_N (X - z1)^{-1} (X^* - conj(z2))^{-1}`` for large random ``X``; the
double contour integral of ``f(z1) g(conj z2) K`` over a circle of radius
``> 1`` predicts ``tr_N f(X) g(X^*)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

from .errors import ContourError, ConvergenceError, SingularityError
from .profile import PerronPair, VarianceProfile, avg, inner, project_Q

COND_LIMIT = 1e12


@dataclass(frozen=True)
class SpectralPoint:
    zeta1: complex
    zeta2: complex

    def __post_init__(self):
        object.__setattr__(self, "zeta1", complex(self.zeta1))
        object.__setattr__(self, "zeta2", complex(self.zeta2))

    @property
    def delta(self) -> float:
        """Margin ``min(|z1|, |z2|) - 1`` from the unit disk."""
        return min(abs(self.zeta1), abs(self.zeta2)) - 1.0

    @property
    def product(self) -> complex:
        """``z1 * conj(z2)``, the only combination the kernel depends on."""
        return self.zeta1 * self.zeta2.conjugate()


@dataclass(frozen=True)
class Contour:
    """Origin-centered circle sampled at ``nodes`` equispaced points."""

    radius: float = 1.5
    nodes: int = 256

    def __post_init__(self):
        if not self.radius > 1:
            raise ValueError(f"contour radius must exceed 1, got {self.radius}")
        if self.nodes < 8 or self.nodes % 2:
            raise ValueError(f"contour needs an even number of nodes >= 8, got {self.nodes}")

    def points(self) -> np.ndarray:
        theta = 2 * np.pi * np.arange(self.nodes) / self.nodes
        return self.radius * np.exp(1j * theta)


class AnalyticFunction:
    """A function analytic on a disk, given as polynomial coefficients or a callable.

    ``coeffs[k]`` multiplies ``z**k``. Callables must accept numpy arrays.
    """

    def __init__(self, fn: Callable | None = None, coeffs: Sequence[complex] | None = None,
                 name: str | None = None):
        if (fn is None) == (coeffs is None):
            raise ValueError("give exactly one of fn or coeffs")
        if coeffs is not None:
            c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
            if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
                raise ValueError("polynomial coefficients must be a finite 1-d sequence")
            self.coeffs = c
        else:
            self.coeffs = None
        self._fn = fn
        self.name = name or ("poly" if coeffs is not None else getattr(fn, "__name__", "fn"))

    @classmethod
    def polynomial(cls, coeffs, name=None):
        return cls(coeffs=coeffs, name=name)

    @classmethod
    def monomial(cls, k: int):
        c = np.zeros(k + 1, dtype=complex)
        c[k] = 1.0
        return cls(coeffs=c, name=f"z^{k}")

    @classmethod
    def from_callable(cls, fn, name=None):
        return cls(fn=fn, name=name)

    @property
    def is_polynomial(self) -> bool:
        return self.coeffs is not None

    def __call__(self, z):
        z = np.asarray(z)
        if self.coeffs is None:
            return np.asarray(self._fn(z), dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for a in self.coeffs[::-1]:
            out = out * z + a
        return out

    def of_matrix(self, x: np.ndarray) -> np.ndarray:
        """Horner evaluation on a square matrix (polynomials only)."""
        if self.coeffs is None:
            raise TypeError("matrix evaluation needs polynomial coefficients")
        out = np.zeros_like(x, dtype=complex)
        eye = np.eye(x.shape[0])
        for a in self.coeffs[::-1]:
            out = out @ x + a * eye
        return out

    def __repr__(self):
        return f"AnalyticFunction({self.name})"


def _lu_rcond(a):
    """LU factorization plus LAPACK reciprocal 1-norm condition estimate."""
    lu, piv = la.lu_factor(a, check_finite=False)
    gecon, = la.get_lapack_funcs(("gecon",), (lu,))
    anorm = np.linalg.norm(a, 1)
    rcond, info = gecon(lu, anorm, norm="1")
    return (lu, piv), float(rcond)


def _solve_checked(a, b, what):
    lu_piv, rcond = _lu_rcond(a)
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(f"{what}: system is singular or ill-conditioned (cond~{cond:.3e})",
                               cond=cond)
    return la.lu_solve(lu_piv, b, check_finite=False), cond


def kernel_vector(p: VarianceProfile, w: complex) -> np.ndarray:
    """Solution ``y`` of ``(w - S) y = 1``."""
    a = w * np.eye(p.n) - p.s
    y, _ = _solve_checked(a.astype(complex), np.ones(p.n, dtype=complex), f"kernel at w={w}")
    return y


def kernel_value(p: VarianceProfile, pt: SpectralPoint, return_cond: bool = False):
    """``<(z1 conj(z2) - S)^{-1} 1>``, optionally with the condition estimate."""
    a = (pt.product * np.eye(p.n) - p.s).astype(complex)
    y, cond = _solve_checked(a, np.ones(p.n, dtype=complex), f"kernel at {pt}")
    val = complex(avg(y))
    return (val, cond) if return_cond else val


@dataclass(frozen=True)
class KernelParts:
    perron_part: complex
    complement_part: complex

    @property
    def total(self) -> complex:
        return self.perron_part + self.complement_part


def kernel_decomposition(p: VarianceProfile, pp: PerronPair, pt: SpectralPoint) -> KernelParts:
    """Split the kernel into the Perron pole and the spectral complement.

    ``perron_part = <v_l><v_r> / (<v_l, v_r> (w - 1))`` and
    ``complement_part = <Q (w - S)^{-1} Q 1>`` with ``w = z1 conj(z2)``.
    """
    w = pt.product
    perron = avg(pp.v_l) * avg(pp.v_r) / (inner(pp.v_l, pp.v_r) * (w - 1.0))
    q1 = project_Q(pp, np.ones(p.n, dtype=complex))
    a = (w * np.eye(p.n) - p.s).astype(complex)
    y, _ = _solve_checked(a, q1, f"kernel complement at {pt}")
    comp = avg(project_Q(pp, y))
    return KernelParts(complex(perron), complex(comp))


def _node_weights(contour: Contour, nodes: int | None = None):
    k = nodes or contour.nodes
    theta = 2 * np.pi * np.arange(k) / k
    zeta = contour.radius * np.exp(1j * theta)
    return zeta


def _double_sum(f_vals, g_vals, zeta, kappa, mode):
    """Trapezoidal double sum over node pairs; ``kappa[d]`` is the kernel at
    ``zeta_p * conj(zeta_q)`` with ``d = (p - q) mod K``."""
    k = zeta.size
    a = f_vals * zeta
    b = g_vals * zeta.conj()
    if mode == "double":
        idx = (np.arange(k)[:, None] - np.arange(k)[None, :]) % k
        return np.sum(a[:, None] * b[None, :] * kappa[idx]) / k**2
    if mode == "fast":
        # circular cross-correlation c_d = sum_p a_p b_{p-d}
        corr = np.fft.ifft(np.fft.fft(a) * k * np.fft.ifft(b))
        return np.sum(kappa * corr) / k**2
    raise ValueError(f"unknown mode {mode!r}")


def functional_trace(p: VarianceProfile, f: AnalyticFunction, g: AnalyticFunction,
                     contour: Contour = Contour(), mode: str = "double",
                     tol: float = 1e-9) -> complex:
    """Predicted ``tr_N f(X) g(X^*)`` by trapezoidal double contour quadrature.

    ``z1`` runs counterclockwise over the contour and ``conj(z2)`` clockwise.
    With both orientations spelled out, the ``(2 pi i)^-2`` prefactor leaves a
    global minus sign; it is dropped so that ``f = g = 1`` returns
    ``tr_N I = 1``.

    The kernel depends on ``z1 conj(z2)`` only, so on equispaced nodes it is
    needed at ``K`` distinct values. ``mode="double"`` sums all ``K**2`` node
    pairs; ``mode="fast"`` does the same sum by FFT correlation.

    Raises
    ------
    ConvergenceError
        If halving the node count moves the result by more than ``tol``
        (relative to ``max(1, |result|)``).
    """
    k = contour.nodes
    zeta = _node_weights(contour)
    w = contour.radius**2 * np.exp(2j * np.pi * np.arange(k) / k)
    eye = np.eye(p.n)
    ones = np.ones(p.n, dtype=complex)
    kappa = np.empty(k, dtype=complex)
    for d in range(k):
        y, _ = _solve_checked((w[d] * eye - p.s).astype(complex), ones, "contour kernel")
        kappa[d] = avg(y)

    f_vals = f(zeta)
    g_vals = g(zeta.conj())
    fine = _double_sum(f_vals, g_vals, zeta, kappa, mode)
    coarse = _double_sum(f_vals[::2], g_vals[::2], zeta[::2], kappa[::2], mode)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        raise ConvergenceError(
            f"contour quadrature not converged: |I_K - I_K/2| = {abs(fine - coarse):.3e}",
            residual=abs(fine - coarse))
    return complex(fine)


def moment_series(p: VarianceProfile, f: AnalyticFunction, g: AnalyticFunction) -> complex:
    """``sum_k a_k b_k <S^k 1>`` for polynomial ``f``, ``g``."""
    if not (f.is_polynomial and g.is_polynomial):
        raise TypeError("moment_series needs polynomial f and g")
    m = min(f.coeffs.size, g.coeffs.size)
    v = np.ones(p.n)
    total = 0j
    for k in range(m):
        total += f.coeffs[k] * g.coeffs[k] * avg(v)
        v = p.s @ v
    return complex(total)


def _schur(x):
    t, z = la.schur(np.asarray(x, dtype=complex), output="complex")
    return t, z


def empirical_functional_trace(x: np.ndarray, f: AnalyticFunction, g: AnalyticFunction,
                               contour: Contour = Contour(), tol: float = 1e-8) -> complex:
    """``tr_N f(X) g(X^*)`` by contour quadrature of the resolvent product.

    Works in the Schur basis ``X = Z T Z^*``; the integrand factorizes under the
    trace, so the double sum is evaluated as the trace of a product of two
    single sums (identical to summing all node pairs).
    """
    n = x.shape[0]
    t, _ = _schur(x)
    eig = np.diag(t)
    if np.max(np.abs(eig)) >= contour.radius:
        raise ContourError(
            f"spectral radius {np.max(np.abs(eig)):.4f} is not inside the contour "
            f"of radius {contour.radius}")
    zeta = _node_weights(contour)
    f_vals = f(zeta)
    g_vals = g(zeta.conj())
    eye = np.eye(n)
    f_sum = np.zeros((2, n, n), dtype=complex)
    g_sum = np.zeros((2, n, n), dtype=complex)
    for j, zj in enumerate(zeta):
        try:
            r = la.solve_triangular(t - zj * eye, eye, check_finite=False)
        except la.LinAlgError as exc:
            raise SingularityError(f"resolvent solve failed at node {zj}") from exc
        fa = f_vals[j] * zj * r
        gb = g_vals[j] * zj.conjugate() * r.conj().T
        f_sum[0] += fa
        g_sum[0] += gb
        if j % 2 == 0:
            f_sum[1] += fa
            g_sum[1] += gb
    k = zeta.size
    fine = np.trace(f_sum[0] @ g_sum[0]) / (k**2 * n)
    coarse = np.trace(f_sum[1] @ g_sum[1]) / ((k // 2) ** 2 * n)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        raise ConvergenceError(
            f"empirical contour quadrature not converged: {abs(fine - coarse):.3e}",
            residual=abs(fine - coarse))
    return complex(fine)


def direct_functional_trace(x: np.ndarray, f: AnalyticFunction, g: AnalyticFunction) -> complex:
    """``tr_N f(X) g(X^*)`` by Horner products."""
    n = x.shape[0]
    return complex(np.trace(f.of_matrix(x) @ g.of_matrix(x.conj().T)) / n)


def empirical_resolvent_product(x: np.ndarray, pt: SpectralPoint) -> complex:
    """``tr_N (X - z1)^{-1} (X^* - conj z2)^{-1}`` from LU factorizations."""
    n = x.shape[0]
    eye = np.eye(n, dtype=complex)
    r1, _ = _solve_checked(x - pt.zeta1 * eye, eye, f"resolvent at {pt.zeta1}")
    if pt.zeta2 == pt.zeta1:
        r2 = r1
    else:
        r2, _ = _solve_checked(x - pt.zeta2 * eye, eye, f"resolvent at {pt.zeta2}")
    # tr(A^{-1} (B^{-1})^*) = sum_ij (A^{-1})_ij conj((B^{-1})_ij)
    return complex(np.sum(r1 * r2.conj()) / n)
