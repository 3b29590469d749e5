"""Time evolution of randomly coupled linear systems.

Predictions and empirical evaluations for

* the averaged squared norm ``E ||u_t||^2 = tr_N e^{t(gX^*-1)} e^{t(gX-1)}``
  of ``du/dt = -u + gXu`` started uniformly on the unit sphere,
* its Hermitian (Wigner) counterpart ``tr_N e^{2t(W-1)}``,
* the stationary autocorrelation of ``du = (-u + gXu) dt + dB``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy import integrate

from .errors import ConvergenceError, HorizonError
from .profile import PerronPair
from .sampler import random_unit_vectors

# exp() overflows a little above 709
_LOG_MAX = 700.0


def geometric_grid(t_min: float, t_max: float, per_decade: int = 40) -> np.ndarray:
    count = max(2, int(round(per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, count)


@dataclass
class DecayCurve:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in shape")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class AutocorrCurve:
    taus: np.ndarray
    values: np.ndarray
    g: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    window: tuple
    residual: float


def _check_times(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need a non-empty 1-d grid of times")
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return t


def _check_g(g, critical_ok=True):
    if not (0 < g < 1 or (critical_ok and g == 1)):
        raise ValueError(f"coupling g={g} outside {'(0, 1]' if critical_ok else '(0, 1)'}")


# --- predictions ------------------------------------------------------------

def _circle_average(t, g, tol=1e-13, max_nodes=1 << 16):
    """``(1/2pi) int e^{2t(g cos th - 1)} d th`` by trapezoidal node doubling."""
    shift = -2 * t * (1 - g)  # factored out so the integrand stays <= 1
    nodes = 16
    prev = None
    while nodes <= max_nodes:
        th = 2 * np.pi * np.arange(nodes) / nodes
        val = np.mean(np.exp(2 * t * g * (np.cos(th) - 1)))
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val * math.exp(shift)
        prev = val
        nodes *= 2
    raise ConvergenceError(f"circle average did not converge at t={t}")


def predicted_sqnorm(pp: PerronPair, g: float, times) -> DecayCurve:
    """``c_S * e^{-2t} I_0(2gt)`` with ``c_S = <v_l><v_r>/<v_l, v_r>``.

    ``e^{-2t} I_0(2gt)`` (that is ``J_0(2igt) e^{-2t}``) is evaluated as the
    circle average ``(1/2pi) int e^{2t(g cos th - 1)} d th``.
    """
    _check_g(g)
    t = _check_times(times)
    vals = pp.c_s * np.array([_circle_average(ti, g) for ti in t])
    return DecayCurve(t, vals, {"g": g, "source": "prediction"})


def semicircle_prediction(times) -> DecayCurve:
    """``(2/pi) int_{-1}^{1} e^{2t(x-1)} sqrt(1-x^2) dx``."""
    t = _check_times(times)
    vals = []
    for ti in t:
        # QAWS handles the square-root endpoint weights exactly
        val, err = integrate.quad(lambda x, ti=ti: np.exp(2 * ti * (x - 1)), -1, 1,
                                  weight="alg", wvar=(0.5, 0.5), epsabs=0, epsrel=1e-12,
                                  limit=200)
        vals.append(2 / np.pi * val)
    return DecayCurve(t, np.array(vals), {"source": "prediction", "g": 1.0})


def predicted_autocorr(g: float, taus) -> AutocorrCurve:
    """``e^{-tau sqrt(1-g^2)} / (2 sqrt(1-g^2))``."""
    if not 0 < g < 1:
        raise ValueError(f"autocorrelation needs 0 < g < 1, got {g}")
    tau = np.asarray(taus, dtype=float)
    rate = math.sqrt(1 - g * g)
    return AutocorrCurve(tau, np.exp(-tau * rate) / (2 * rate), g, {"source": "prediction"})


# --- empirical evaluation ---------------------------------------------------

class SchurPropagator:
    """``e^{s T}`` on an increasing grid of ``s`` for a fixed complex Schur factor.

    Each step multiplies by ``expm((s_k - s_{k-1}) T)``; increments that repeat
    (arithmetic grids) reuse one exponential.
    """

    def __init__(self, x: np.ndarray):
        self.t, self.z = la.schur(np.asarray(x, dtype=complex), output="complex")
        self.eigenvalues = np.diag(self.t).copy()
        self._cache = {}

    def _step(self, ds):
        key = round(ds, 12)
        if key not in self._cache:
            if len(self._cache) > 4:
                self._cache.clear()
            self._cache[key] = la.expm(ds * self.t)
        return self._cache[key]

    def powers(self, scale, grid):
        """Yield ``(s, expm(scale * s * T))`` for ``s`` in ``grid``."""
        n = self.t.shape[0]
        cur = np.eye(n, dtype=complex)
        last = 0.0
        for s in grid:
            ds = scale * (s - last)
            if ds != 0:
                cur = self._step(ds) @ cur
            last = s
            yield s, cur


def _guard(eigs, g, t_max):
    abscissa = float(np.max(g * eigs.real))
    if 2 * t_max * max(abscissa, 0.0) > _LOG_MAX:
        raise HorizonError(f"t={t_max} beyond safe horizon for spectral abscissa {abscissa:.3f}")


def _log_sqnorm(e):
    nrm = np.linalg.norm(e)
    if not np.isfinite(nrm) or nrm == 0:
        raise HorizonError("matrix exponential overflowed")
    return 2 * math.log(nrm)


def empirical_sqnorm_trace(x: np.ndarray, g: float, times, meta: dict | None = None) -> DecayCurve:
    """Exact ``tr_N e^{t(gX^*-1)} e^{t(gX-1)} = ||e^{t(gX-1)}||_F^2 / N`` per sample."""
    _check_g(g)
    t = _check_times(times)
    n = x.shape[0]
    prop = SchurPropagator(x)
    _guard(prop.eigenvalues, g, t[-1])
    vals = []
    for ti, e in prop.powers(g, t):
        vals.append(math.exp(_log_sqnorm(e) - 2 * ti - math.log(n)))
    return DecayCurve(t, np.array(vals), {"g": g, "source": "empirical-trace", **(meta or {})})


def empirical_sqnorm_mc(x: np.ndarray, g: float, times, n_init: int, seed: int,
                        sample_index: int = 0, meta: dict | None = None) -> DecayCurve:
    """Average of ``||e^{t(gX-1)} u_0||^2`` over random unit ``u_0``.

    Returns the mean curve with its standard error in ``stderr``.
    """
    _check_g(g)
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    t = _check_times(times)
    n = x.shape[0]
    u0 = random_unit_vectors(n, n_init, seed, sample_index)
    prop = SchurPropagator(x)
    _guard(prop.eigenvalues, g, t[-1])
    w = prop.z.conj().T @ u0
    means, errs = [], []
    for ti, e in prop.powers(g, t):
        sq = np.sum(np.abs(e @ w) ** 2, axis=0) * math.exp(-2 * ti)
        means.append(sq.mean())
        errs.append(sq.std(ddof=1) / math.sqrt(n_init) if n_init > 1 else np.nan)
    return DecayCurve(t, np.array(means), {"g": g, "source": "empirical-mc", **(meta or {})},
                      stderr=np.array(errs))


def hermitian_sqnorm(w: np.ndarray, times) -> DecayCurve:
    """``tr_N e^{2t(W-1)}`` from the eigenvalues of a Hermitian ``W``."""
    w = np.asarray(w)
    if np.linalg.norm(w - w.conj().T) > 1e-12 * max(np.linalg.norm(w), 1.0):
        raise ValueError("matrix is not Hermitian")
    t = _check_times(times)
    lam = la.eigvalsh(w)
    vals = [math.exp(_logmeanexp(2 * ti * (lam - 1))) for ti in t]
    return DecayCurve(t, np.array(vals), {"source": "empirical-trace", "g": 1.0})


def _logmeanexp(a):
    m = np.max(a)
    return float(m + math.log(np.mean(np.exp(a - m))))


def _tail_horizon(eigs, g, tail_tol):
    decay = -2 * float(np.max(g * eigs.real - 1))
    if decay <= 0:
        raise HorizonError("g X - 1 is not stable; no stationary state")
    return math.log(1 / tail_tol) / decay


def stationary_covariance_quadrature(x: np.ndarray, g: float, u_max: float | None = None,
                                     quad_nodes: int = 12, panel: float = 1.0,
                                     tail_tol: float = 1e-10):
    """``int_0^inf e^{(gX-1)u} e^{(gX-1)^* u} du`` by composite Gauss-Legendre,
    in the Schur basis. Returns ``(sigma_schur, propagator)``."""
    prop = SchurPropagator(x)
    n = x.shape[0]
    if u_max is None:
        u_max = _tail_horizon(prop.eigenvalues, g, tail_tol)
    panels = max(1, int(math.ceil(u_max / panel)))
    nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
    offs = 0.5 * panel * (nodes + 1)
    a = g * prop.t - np.eye(n)
    node_exp = [la.expm(o * a) for o in offs]
    step = la.expm(panel * a)
    sigma = np.zeros((n, n), dtype=complex)
    base = np.eye(n, dtype=complex)
    for _ in range(panels):
        for ne, wk in zip(node_exp, weights):
            e = ne @ base
            sigma += (0.5 * panel * wk) * (e @ e.conj().T)
        base = step @ base
    # integrand left out beyond u_max, measured on the last panel edge
    tail = np.linalg.norm(base) ** 2 / n
    trace = np.trace(sigma).real / n
    if tail > tail_tol * max(trace, 1.0) * 10:
        raise HorizonError(f"tail at u_max={panels * panel:.1f} is {tail:.2e}; raise u_max")
    return sigma, prop


def empirical_autocorr(x: np.ndarray, g: float, taus, u_max: float | None = None,
                       quad_nodes: int = 12, tail_tol: float = 1e-10) -> AutocorrCurve:
    """``R(tau) = int_0^inf e^{-2u-tau} tr_N(e^{gX(u+tau)} e^{gX^* u}) du`` per sample.

    The ``u``-integral is done once as a matrix integral ``Sigma`` and
    ``R(tau) = tr_N(e^{(gX-1)tau} Sigma)``.
    """
    if not 0 < g < 1:
        raise ValueError(f"autocorrelation needs 0 < g < 1, got {g}")
    tau = _check_times(taus)
    sigma, prop = stationary_covariance_quadrature(x, g, u_max, quad_nodes, tail_tol=tail_tol)
    n = x.shape[0]
    a = g * prop.t - np.eye(n)
    vals = [np.trace(la.expm(ti * a) @ sigma).real / n for ti in tau]
    return AutocorrCurve(tau, np.array(vals), g, {"source": "empirical-quadrature"})


def lyapunov_autocorr(x: np.ndarray, g: float, taus) -> AutocorrCurve:
    """Same quantity via ``(gX-1) Sigma + Sigma (gX-1)^* = -1``."""
    n = x.shape[0]
    a = g * np.asarray(x, dtype=complex) - np.eye(n)
    sigma = la.solve_continuous_lyapunov(a, -np.eye(n))
    tau = np.asarray(taus, dtype=float)
    vals = [np.trace(la.expm(ti * a) @ sigma).real / n for ti in tau]
    return AutocorrCurve(tau, np.array(vals), g, {"source": "empirical-lyapunov"})


def simulate_autocorr_em(x: np.ndarray, g: float, taus, t_burn: float = 20.0,
                         t_run: float = 200.0, dt: float = 1e-3, seed: int = 0) -> AutocorrCurve:
    """Euler-Maruyama smoke test of the stationary SDE (no acceptance weight).

    Complex noise with ``E|dB_i|^2 = dt``.
    """
    from .sampler import rng_for
    rng = rng_for(seed, 0, stream=7)
    n = x.shape[0]
    a = g * np.asarray(x, dtype=complex) - np.eye(n)
    lags = np.round(np.asarray(taus) / dt).astype(int)
    steps = int((t_burn + t_run) / dt)
    burn = int(t_burn / dt)
    keep = max(lags) + 1
    u = np.zeros(n, dtype=complex)
    history = np.zeros((keep, n), dtype=complex)
    acc = np.zeros(lags.size, dtype=complex)
    count = 0
    sq = math.sqrt(dt / 2)
    for k in range(steps):
        u = u + dt * (a @ u) + sq * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        history[k % keep] = u
        if k >= burn + keep:
            past = history[(k - lags) % keep]
            acc += (past.conj() * u).sum(axis=1) / n
            count += 1
    return AutocorrCurve(np.asarray(taus, float), (acc / max(count, 1)).real, g,
                         {"source": "empirical-em"})


# --- fits -------------------------------------------------------------------

def _window_mask(x, window):
    lo, hi = window
    mask = (x >= lo) & (x <= hi)
    if mask.sum() < 2:
        raise ValueError(f"fewer than two points in window {window}")
    return mask


def fit_decay_exponent(curve: DecayCurve, window) -> ExponentFit:
    """Least-squares slope of ``log(value)`` against ``log(t)``."""
    mask = _window_mask(curve.times, window)
    t, v = curve.times[mask], curve.values[mask]
    if np.any(v <= 0) or np.any(t <= 0):
        raise ValueError("nonpositive values in fit window")
    (slope, intercept), res, *_ = np.polyfit(np.log(t), np.log(v), 1, full=True)
    return ExponentFit(float(slope), float(intercept), tuple(window),
                       float(res[0]) if len(res) else 0.0)


def fit_decay_rate(curve: AutocorrCurve, window) -> float:
    """Positive exponential rate from a least-squares fit of ``log(value)`` against ``tau``."""
    mask = _window_mask(curve.taus, window)
    v = curve.values[mask]
    if np.any(v <= 0):
        raise ValueError("nonpositive values in fit window")
    slope, _ = np.polyfit(curve.taus[mask], np.log(v), 1)
    return float(-slope)


def write_curve_csv(curves, path) -> None:
    """Write curves as rows ``(t_or_tau, value, source, g, profile_id, seed)``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t_or_tau", "value", "source", "g", "profile_id", "seed"])
        for c in curves:
            xs = c.times if isinstance(c, DecayCurve) else c.taus
            g = c.meta.get("g", getattr(c, "g", ""))
            for x, v in zip(xs, c.values):
                out.writerow([repr(float(x)), repr(float(v)), c.meta.get("source", ""), g,
                              c.meta.get("profile_id", ""), c.meta.get("seed", "")])
