"""Matrix Dyson equation for the Hermitized linearization of the resolvent product.

The unknown ``M`` is a ``4n x 4n`` matrix whose sixteen ``n x n`` blocks are
all diagonal, so it is stored as an ``(n, 4, 4)`` array: ``m[i]`` collects the
``i``-th diagonal entry of every block. The equation

    -M^{-1} = z + A + alpha (E_24 + E_42) + Sigma[M]

then decouples into ``n`` coupled ``4 x 4`` problems. Block indices in the
public helpers are 1-based to match the usual ``(3, 1)`` block notation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConvergenceError, SingularityError
from .kernel import SpectralPoint, empirical_resolvent_product
from .profile import PerronPair, VarianceProfile, perron_vectors

DEFAULT_KAPPA = 0.05

# (row, col) of the eight block channels the self-energy reads and writes
CHANNELS = ((0, 0), (3, 3), (1, 1), (2, 2), (0, 2), (3, 1), (1, 3), (2, 0))
CHANNEL_NAMES = tuple(f"{a + 1}{b + 1}" for a, b in CHANNELS)


def a_matrix(pt: SpectralPoint) -> np.ndarray:
    a = np.zeros((4, 4), dtype=complex)
    a[0, 3] = pt.zeta2.conjugate()
    a[1, 2] = pt.zeta1
    a[2, 1] = pt.zeta1.conjugate()
    a[3, 0] = pt.zeta2
    return a


def alpha_matrix(alpha: float) -> np.ndarray:
    a = np.zeros((4, 4), dtype=complex)
    a[1, 3] = a[3, 1] = alpha
    return a


def self_energy(p: VarianceProfile, r: np.ndarray) -> np.ndarray:
    """Block self-energy on an ``(n, 4, 4)`` block-of-diagonals array."""
    s, st = p.s, p.s.T
    out = np.zeros_like(r, dtype=complex)
    out[:, 0, 0] = st @ r[:, 3, 3]
    out[:, 0, 2] = st @ r[:, 3, 1]
    out[:, 1, 1] = s @ r[:, 2, 2]
    out[:, 1, 3] = s @ r[:, 2, 0]
    out[:, 2, 0] = st @ r[:, 1, 3]
    out[:, 2, 2] = st @ r[:, 1, 1]
    out[:, 3, 1] = s @ r[:, 0, 2]
    out[:, 3, 3] = s @ r[:, 0, 0]
    return out


@dataclass
class BlockDiag4:
    """Solution of the MDE as an ``(n, 4, 4)`` array plus the point it solves."""

    blocks: np.ndarray
    pt: SpectralPoint
    alpha: float = 0.0
    z: complex = 0.0
    residual: float = float("nan")
    iterations: int = 0
    method: str = field(default="exact")

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    def block(self, k: int, l: int) -> np.ndarray:
        """Diagonal of the ``(k, l)`` block, 1-based."""
        return self.blocks[:, k - 1, l - 1]

    def trace_block(self, k: int, l: int) -> complex:
        """``tr_N E_k^* M E_l``."""
        return complex(np.mean(self.block(k, l)))

    def imag_part(self) -> np.ndarray:
        """``(M - M^*) / 2i`` per index."""
        b = self.blocks
        return (b - np.conj(np.swapaxes(b, 1, 2))) / 2j

    def to_dense(self) -> np.ndarray:
        n = self.n
        out = np.zeros((4 * n, 4 * n), dtype=complex)
        idx = np.arange(n)
        for k in range(4):
            for l in range(4):
                out[k * n + idx, l * n + idx] = self.blocks[:, k, l]
        return out


def mde_exact_zero(pt: SpectralPoint, n: int = 1) -> BlockDiag4:
    """``M = -A^{-1}``, the exact solution at ``alpha = z = 0``.

    Valid for ``|z1|, |z2| > 1``, where the self-energy of this ``M`` vanishes.
    """
    if abs(pt.zeta1) <= 1 or abs(pt.zeta2) <= 1:
        raise ValueError(f"exact solution needs |zeta_i| > 1, got {pt}")
    m = np.zeros((4, 4), dtype=complex)
    m[0, 3] = -1 / pt.zeta2
    m[3, 0] = -1 / pt.zeta2.conjugate()
    m[1, 2] = -1 / pt.zeta1.conjugate()
    m[2, 1] = -1 / pt.zeta1
    return BlockDiag4(np.broadcast_to(m, (n, 4, 4)).copy(), pt, 0.0, 0.0, residual=0.0)


def _rhs(p, m, pt, alpha, z):
    return z * np.eye(4) + a_matrix(pt) + alpha_matrix(alpha) + self_energy(p, m)


def mde_residual(p: VarianceProfile, m: np.ndarray, pt: SpectralPoint,
                 alpha: float = 0.0, z: complex = 0.0) -> float:
    """``max |M^{-1} + z + A + alpha + Sigma[M]|`` over all diagonal entries."""
    return float(np.max(np.abs(np.linalg.inv(m) + _rhs(p, m, pt, alpha, z))))


def _fixed_point_map(p, m, pt, alpha, z):
    return -np.linalg.inv(_rhs(p, m, pt, alpha, z))


def stability_apply(p: VarianceProfile, m, r: np.ndarray) -> np.ndarray:
    """``R - M Sigma[R] M`` on ``(n, 4, 4)`` arrays."""
    mb = m.blocks if isinstance(m, BlockDiag4) else m
    return r - mb @ self_energy(p, r) @ mb


def _newton_step(p, m, pt, alpha, z, tol):
    n = m.shape[0]
    g = m - _fixed_point_map(p, m, pt, alpha, z)

    def matvec(v):
        return stability_apply(p, m, v.reshape(n, 4, 4)).ravel()

    op = LinearOperator((16 * n, 16 * n), matvec=matvec, dtype=complex)
    dx, info = gmres(op, -g.ravel(), rtol=min(1e-3, tol), atol=0.0, restart=64, maxiter=50)
    return m + dx.reshape(n, 4, 4)


def _iterate(p, pt, alpha, z, m0, tol, theta, max_iter, stall):
    m = np.array(m0, dtype=complex)
    best = np.inf
    since_best = 0
    method = "fixed-point"
    res = np.inf
    for it in range(1, max_iter + 1):
        target = _fixed_point_map(p, m, pt, alpha, z)
        m = (1 - theta) * m + theta * target
        res = mde_residual(p, m, pt, alpha, z)
        if not np.isfinite(res):
            raise ConvergenceError("MDE iteration diverged", residual=res, iterations=it)
        if res <= tol:
            return m, res, it, method
        if res < 0.5 * best:
            best, since_best = res, 0
        else:
            since_best += 1
        if since_best >= stall:
            method = "newton"
            m = _newton_step(p, m, pt, alpha, z, tol)
            since_best = 0
            best = mde_residual(p, m, pt, alpha, z)
    raise ConvergenceError(f"MDE iteration stalled at residual {res:.3e}", residual=res,
                           iterations=max_iter)


def validity_radius(pt: SpectralPoint, kappa: float = DEFAULT_KAPPA) -> float:
    """``kappa * Delta^2``: bound on ``|alpha|`` and ``|z|`` near the exact solution."""
    return kappa * pt.delta**2


def mde_solve(p: VarianceProfile, pt: SpectralPoint, alpha: float = 0.0, z: complex = 0.0,
              kappa: float = DEFAULT_KAPPA, tol: float = 1e-12, theta: float = 0.5,
              max_iter: int = 20000, stall: int = 200, check_region: bool = True) -> BlockDiag4:
    """Solve the MDE near ``alpha = z = 0`` by damped fixed-point iteration.

    Warm-started from :func:`mde_exact_zero`; falls back to Newton steps driven
    by :func:`stability_apply` when the residual stalls.

    Raises
    ------
    ValueError
        If ``Delta <= 0`` or ``(alpha, z)`` lies outside ``|alpha|, |z| < kappa Delta^2``.
    ConvergenceError
        If the residual does not reach ``tol``.
    """
    if pt.delta <= 0:
        raise ValueError(f"spectral point {pt} is not outside the unit disk")
    if check_region:
        rad = validity_radius(pt, kappa)
        if abs(alpha) >= rad or abs(z) >= rad:
            raise ValueError(
                f"(alpha, z) = ({alpha}, {z}) outside validity region kappa*Delta^2 = {rad:.3e}")
    m0 = mde_exact_zero(pt, p.n)
    if alpha == 0 and z == 0:
        m0.residual = mde_residual(p, m0.blocks, pt)
        return m0
    m, res, it, method = _iterate(p, pt, alpha, complex(z), m0.blocks, tol, theta, max_iter, stall)
    return BlockDiag4(m, pt, alpha, complex(z), residual=res, iterations=it, method=method)


def mde_dalpha_kernel(p: VarianceProfile, pt: SpectralPoint, h: float = 1e-4,
                      kappa: float = DEFAULT_KAPPA, tol: float = 1e-13) -> complex:
    """Central difference in ``alpha`` of ``tr_N E_3^* M E_1`` at ``alpha = 0``."""
    plus = mde_solve(p, pt, h, 0.0, kappa=kappa, tol=tol)
    minus = mde_solve(p, pt, -h, 0.0, kappa=kappa, tol=tol)
    return (plus.trace_block(3, 1) - minus.trace_block(3, 1)) / (2 * h)


# --- spectral structure at the exact solution -------------------------------

def _sqrt_v_weights(pt: SpectralPoint, pp: PerronPair) -> np.ndarray:
    """Square root of the diagonal conjugation weights, shape ``(n, 4)``.

    Blocks 1 and 3 carry ``sqrt(v_r / v_l)``, blocks 2 and 4 ``sqrt(v_l / v_r)``,
    so that ``sqrt(v_l v_r)`` is an eigenvector of every populated channel.
    """
    ratio = np.sqrt(pp.v_r / pp.v_l)
    a1, a2 = abs(pt.zeta1), abs(pt.zeta2)
    v = np.stack([ratio / a2, 1 / (ratio * a1), ratio / a1, 1 / (ratio * a2)], axis=1)
    return np.sqrt(v)


def _conj_diag(d, r):
    return d[:, :, None] * r * d[:, None, :]


def _channels_to_blocks(vec, n):
    r = np.zeros((n, 4, 4), dtype=vec.dtype)
    for c, (a, b) in enumerate(CHANNELS):
        r[:, a, b] = vec[c * n:(c + 1) * n]
    return r


def _blocks_to_channels(r):
    return np.concatenate([r[:, a, b] for a, b in CHANNELS])


def f_operator_apply(p: VarianceProfile, pt: SpectralPoint, r: np.ndarray,
                     pp: PerronPair | None = None) -> np.ndarray:
    """``sqrtV Sigma[sqrtV R sqrtV] sqrtV`` on ``(n, 4, 4)`` arrays."""
    pp = pp or perron_vectors(p)
    d = _sqrt_v_weights(pt, pp)
    return _conj_diag(d, self_energy(p, _conj_diag(d, r)))


def f_operator_matrix(p: VarianceProfile, pt: SpectralPoint,
                      pp: PerronPair | None = None) -> np.ndarray:
    """The weighted self-energy as a real symmetric ``8n x 8n`` matrix on
    :data:`CHANNELS`."""
    pp = pp or perron_vectors(p)
    n = p.n
    eye = np.eye(8 * n)
    cols = [_blocks_to_channels(f_operator_apply(p, pt, _channels_to_blocks(eye[:, j], n), pp))
            for j in range(8 * n)]
    return np.real(np.stack(cols, axis=1))


def f_operator_top_spectrum(p: VarianceProfile, pt: SpectralPoint, k: int = 8,
                            pp: PerronPair | None = None) -> np.ndarray:
    """The ``k`` eigenvalues of largest magnitude, sorted by decreasing value."""
    if abs(pt.zeta1) <= 1 or abs(pt.zeta2) <= 1:
        raise ValueError("need |zeta_i| > 1")
    mat = f_operator_matrix(p, pt, pp)
    vals = la.eigvalsh(0.5 * (mat + mat.T))
    top = vals[np.argsort(-np.abs(vals), kind="stable")[:k]]
    return np.sort(top)[::-1]


def predicted_f_eigenpairs(pt: SpectralPoint):
    """Predicted ``(channel_a, channel_b, sign, eigenvalue)`` for the eight
    extreme eigenmatrices ``E_a[x] +/- E_b[x]`` with ``x = sqrt(v_l v_r)``."""
    a1, a2 = abs(pt.zeta1), abs(pt.zeta2)
    pairs = [("11", "44", 1 / a2**2), ("22", "33", 1 / a1**2),
             ("13", "42", 1 / (a1 * a2)), ("24", "31", 1 / (a1 * a2))]
    return [(a, b, s, s * lam) for a, b, lam in pairs for s in (1, -1)]


def f_eigen_residuals(p: VarianceProfile, pt: SpectralPoint,
                      pp: PerronPair | None = None) -> dict:
    """``|F[v] - lambda v| / |v|`` for each predicted eigenmatrix."""
    pp = pp or perron_vectors(p)
    n = p.n
    x = np.sqrt(pp.v_l * pp.v_r)
    out = {}
    for a, b, sign, lam in predicted_f_eigenpairs(pt):
        r = np.zeros((n, 4, 4))
        ia, ib = CHANNEL_NAMES.index(a), CHANNEL_NAMES.index(b)
        r[:, CHANNELS[ia][0], CHANNELS[ia][1]] = x
        r[:, CHANNELS[ib][0], CHANNELS[ib][1]] = sign * x
        fr = f_operator_apply(p, pt, r, pp)
        key = f"E{a}{'+' if sign > 0 else '-'}E{b}"
        out[key] = (lam, float(np.linalg.norm(fr - lam * r) / np.linalg.norm(r)))
    return out


def u_matrix(pt: SpectralPoint) -> np.ndarray:
    u = np.zeros((4, 4), dtype=complex)
    u[0, 3] = pt.zeta2.conjugate() / abs(pt.zeta2)
    u[1, 2] = pt.zeta1 / abs(pt.zeta1)
    u[2, 1] = pt.zeta1.conjugate() / abs(pt.zeta1)
    u[3, 0] = pt.zeta2 / abs(pt.zeta2)
    return u


def conjugated_stability_apply(p: VarianceProfile, pt: SpectralPoint, r: np.ndarray,
                               pp: PerronPair | None = None) -> np.ndarray:
    """``C_sqrtV (1 - C_U F) C_sqrtV^{-1}`` applied to ``r``; equals the
    stability operator at the exact zero solution."""
    pp = pp or perron_vectors(p)
    d = _sqrt_v_weights(pt, pp)
    u = u_matrix(pt)
    inner_r = _conj_diag(1 / d, r)
    fr = f_operator_apply(p, pt, inner_r, pp)
    return _conj_diag(d, inner_r - u @ fr @ u)


def stability_matrix(p: VarianceProfile, m: BlockDiag4) -> np.ndarray:
    """Stability operator restricted to :data:`CHANNELS`, as an ``8n x 8n`` matrix."""
    n = p.n
    eye = np.eye(8 * n, dtype=complex)
    cols = [_blocks_to_channels(stability_apply(p, m, _channels_to_blocks(eye[:, j], n)))
            for j in range(8 * n)]
    return np.stack(cols, axis=1)


def stability_min_singular(p: VarianceProfile, pt: SpectralPoint) -> float:
    """Smallest singular value of the stability operator at the exact zero solution,
    in the Hilbert-Schmidt norm on the populated channels."""
    mat = stability_matrix(p, mde_exact_zero(pt, p.n))
    return float(la.svdvals(mat)[-1])


# --- Hermitized linearization of a sampled matrix ---------------------------

@dataclass(frozen=True)
class GapReport:
    min_abs_eigenvalue: float
    threshold: float

    @property
    def psi(self) -> bool:
        return self.min_abs_eigenvalue >= self.threshold

    def to_dict(self):
        return {"min_abs_eigenvalue": self.min_abs_eigenvalue, "threshold": self.threshold,
                "psi": self.psi}


def linearization(x: np.ndarray, pt: SpectralPoint, alpha: float) -> np.ndarray:
    """``L = [[0, (X - z2)^*], [X - z1, -alpha]]``."""
    n = x.shape[0]
    eye = np.eye(n)
    top = np.hstack([np.zeros((n, n), dtype=complex), (x - pt.zeta2 * eye).conj().T])
    bottom = np.hstack([x - pt.zeta1 * eye, -alpha * eye])
    return np.vstack([top, bottom])


def hermitization(x: np.ndarray, pt: SpectralPoint, alpha: float) -> np.ndarray:
    """``H = [[0, L], [L^*, 0]]``, a ``4n x 4n`` Hermitian matrix."""
    lin = linearization(x, pt, alpha)
    z = np.zeros_like(lin)
    return np.block([[z, lin], [lin.conj().T, z]])


def gap_report(x: np.ndarray, pt: SpectralPoint, alpha: float = 0.0,
               kappa: float = DEFAULT_KAPPA) -> GapReport:
    """Smallest ``|eigenvalue|`` of ``H`` (the smallest singular value of ``L``)
    against ``kappa Delta^2 / 2``."""
    sv = la.svdvals(linearization(x, pt, alpha))
    return GapReport(float(sv[-1]), kappa * pt.delta**2 / 2)


@dataclass(frozen=True)
class LinearizationResult:
    block_trace_over_alpha: complex
    direct: complex
    gap: GapReport

    @property
    def error(self) -> float:
        return abs(self.block_trace_over_alpha - self.direct)


def linearization_check(x: np.ndarray, pt: SpectralPoint, alpha: float,
                        kappa: float = DEFAULT_KAPPA, cond_limit: float = 1e12) -> LinearizationResult:
    """Compare ``tr_N E_3^* H^{-1} E_1 / alpha`` with the direct resolvent product."""
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    n = x.shape[0]
    h = hermitization(x, pt, alpha)
    gap = gap_report(x, pt, alpha, kappa)
    if gap.min_abs_eigenvalue <= 0 or 1.0 / gap.min_abs_eigenvalue > cond_limit:
        raise SingularityError(f"H is numerically singular (min |spec H| = "
                               f"{gap.min_abs_eigenvalue:.3e})", cond=np.inf)
    e1 = np.zeros((4 * n, n), dtype=complex)
    e1[:n] = np.eye(n)
    g_cols = la.solve(h, e1, assume_a="her")
    block31 = g_cols[2 * n:3 * n]
    return LinearizationResult(complex(np.trace(block31) / n / alpha),
                               empirical_resolvent_product(x, pt), gap)


# --- self-consistent density of states --------------------------------------

@dataclass
class DensitySlice:
    energies: np.ndarray
    density: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    eta: float

    def total_mass(self) -> float:
        ok = self.converged
        return float(np.trapezoid(self.density[ok], self.energies[ok]))


def _density(m):
    im = (m - np.conj(np.swapaxes(m, 1, 2))) / 2j
    return float(np.mean(np.trace(im, axis1=1, axis2=2)).real / (4 * np.pi))


def scdos_slice(p: VarianceProfile, pt: SpectralPoint, alpha: float, grid, eta: float,
                kappa: float = DEFAULT_KAPPA, tol: float = 1e-10, theta: float = 0.5,
                max_iter: int = 20000) -> DensitySlice:
    """Self-consistent density of states at ``z = E + i eta`` over ``grid``.

    Each point is solved for the branch with positive imaginary part. Points
    inside the gap neighborhood start from the exact zero solution, the rest
    continue from the previous converged point (or ``i * 1``). Non-converged
    points are flagged, not dropped.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    grid = np.asarray(grid, dtype=float)
    n = p.n
    dens = np.full(grid.size, np.nan)
    res = np.full(grid.size, np.nan)
    ok = np.zeros(grid.size, dtype=bool)
    start_upper = np.broadcast_to(1j * np.eye(4), (n, 4, 4)).copy()
    exact = mde_exact_zero(pt, n).blocks if pt.delta > 0 else None
    prev = None
    rad = validity_radius(pt, kappa) if pt.delta > 0 else 0.0
    for i, e in enumerate(grid):
        z = complex(e, eta)
        if exact is not None and abs(z) < rad and abs(alpha) < rad:
            m0 = exact
        elif prev is not None:
            m0 = prev
        else:
            m0 = start_upper
        try:
            m, r, _, _ = _iterate(p, pt, alpha, z, m0, tol, theta, max_iter, stall=max_iter)
        except ConvergenceError as exc:
            res[i] = exc.residual if exc.residual is not None else np.nan
            prev = None
            continue
        dens[i], res[i], ok[i] = _density(m), r, True
        prev = m
    return DensitySlice(grid, dens, res, ok, eta)
