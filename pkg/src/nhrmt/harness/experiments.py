"""Experiment runners: one function per experiment kind, all returning a RunReport."""

from __future__ import annotations

import math

import numpy as np

from .. import __version__
from ..dynamics import (
    DecayCurve,
    empirical_autocorr,
    empirical_sqnorm_trace,
    fit_decay_exponent,
    hermitian_sqnorm,
    lyapunov_autocorr,
    predicted_autocorr,
    predicted_sqnorm,
    semicircle_prediction,
)
from ..kernel import (
    AnalyticFunction,
    Contour,
    SpectralPoint,
    direct_functional_trace,
    empirical_functional_trace,
    empirical_resolvent_product,
    functional_trace,
    kernel_value,
    moment_series,
)
from ..mde import (
    DEFAULT_KAPPA,
    f_eigen_residuals,
    f_operator_top_spectrum,
    gap_report,
    linearization_check,
    mde_dalpha_kernel,
    mde_solve,
    predicted_f_eigenpairs,
    stability_min_singular,
)
from ..profile import build_profile, perron_vectors
from ..sampler import EnsembleSpec, sample_matrix, sample_wigner
from .config import ExperimentConfig, time_grid
from .report import RunReport, aggregate
from .runner import map_samples

# frozen tolerances
KERNEL_MC_TOL = 0.05
FUNCTIONAL_TOL = 1e-8
MDE_RESIDUAL_TOL = 1e-12
DALPHA_TOL = 1e-6
F_SPECTRUM_TOL = 1e-8
STABILITY_EXPONENT_MIN = -1.2
STABILITY_DELTAS = (0.1, 0.2, 0.5)
ALPHA_RATIO_RANGE = (3.0, 5.0)
GAP_PASS_FRACTION = 0.95
DECAY_SLOPE_TOL = 0.1
PREDICTION_SLOPE_TOL = 0.02
CRITICAL_SLOPE = -0.5
HERMITIAN_SLOPE = -1.5
AUTOCORR_REL_TOL = 0.05
LYAPUNOV_TOL = 1e-6


# --- shared helpers (payloads are plain dicts so they pickle) ----------------

def profile_from(payload: dict):
    spec = dict(payload["profile"])
    kind = spec.pop("kind")
    return build_profile(kind, payload["n"], spec, seed=payload["seed"])


def point_from(payload: dict) -> SpectralPoint:
    return SpectralPoint(complex(*payload["zeta1"]), complex(*payload["zeta2"]))


def matrix_from(payload: dict, index: int) -> np.ndarray:
    return sample_matrix(EnsembleSpec(profile_from(payload), payload["law"], payload["seed"],
                                      index))


def _base_report(cfg: ExperimentConfig) -> RunReport:
    return RunReport(
        experiment=cfg.experiment,
        config=cfg.numeric_dict(),
        provenance={"config_hash": cfg.config_hash(), "seed": cfg.seed,
                    "code_version": __version__},
    )


def _ok(rows):
    return [r for r in rows if not r.get("flagged")]


def _all_pass(rows, key):
    good = _ok(rows)
    return bool(good) and len(good) == len(rows) and all(r[key] for r in good)


# --- kernel vs Monte Carlo ---------------------------------------------------

def _kernel_sample(payload, i):
    v = empirical_resolvent_product(matrix_from(payload, i), point_from(payload))
    pred = complex(*payload["predicted"])
    return {"value_re": v.real, "value_im": v.imag, "abs_error": abs(v - pred)}


def run_kernel_mc(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    pt = point_from(payload)
    pred = kernel_value(profile_from(payload), pt)
    payload["predicted"] = [pred.real, pred.imag]
    rows = map_samples(_kernel_sample, payload, range(cfg.samples), cfg.workers)
    good = _ok(rows)
    rep.samples = rows
    rep.predicted = pred
    rep.aggregate = {"value_re": aggregate(r["value_re"] for r in good),
                     "value_im": aggregate(r["value_im"] for r in good),
                     "abs_error": aggregate(r["abs_error"] for r in good)}
    rep.tolerance = {"abs_mean_error": KERNEL_MC_TOL}
    if good:
        mean = complex(np.mean([r["value_re"] for r in good]),
                       np.mean([r["value_im"] for r in good]))
        rep.details["abs_mean_error"] = abs(mean - pred)
        rep.passed = abs(mean - pred) <= KERNEL_MC_TOL
    else:
        rep.passed = False
    return rep


# --- functional calculus -----------------------------------------------------

def _functional_sample(payload, i):
    f = AnalyticFunction.monomial(payload["power"])
    contour = Contour(**payload["contour"])
    x = matrix_from(payload, i)
    emp = empirical_functional_trace(x, f, f, contour)
    direct = direct_functional_trace(x, f, f)
    diff = abs(emp - direct)
    return {"empirical_re": emp.real, "empirical_im": emp.imag, "direct_re": direct.real,
            "direct_im": direct.imag, "abs_diff": diff, "within_tol": diff <= FUNCTIONAL_TOL}


def run_functional(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    p = profile_from(payload)
    f = AnalyticFunction.monomial(cfg.power)
    contour = Contour(**cfg.contour)
    pred = functional_trace(p, f, f, contour)
    series = moment_series(p, f, f)
    rows = map_samples(_functional_sample, payload, range(cfg.samples), cfg.workers)
    rep.samples = rows
    rep.predicted = pred
    rep.details = {"series_oracle": series, "prediction_vs_series": abs(pred - series)}
    rep.aggregate = {"empirical_re": aggregate(r["empirical_re"] for r in _ok(rows)),
                     "abs_diff": aggregate(r["abs_diff"] for r in _ok(rows))}
    rep.tolerance = {"abs_diff": FUNCTIONAL_TOL}
    rep.passed = abs(pred - series) <= FUNCTIONAL_TOL and (
        cfg.samples == 0 or _all_pass(rows, "within_tol"))
    return rep


# --- MDE -------------------------------------------------------------------------

def run_mde_check(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    p = profile_from(payload)
    pt = point_from(payload)
    sol = mde_solve(p, pt, alpha=cfg.alpha)
    kern = kernel_value(p, pt)
    dk = mde_dalpha_kernel(p, pt)
    rep.predicted = kern
    rep.details = {"residual": sol.residual, "iterations": sol.iterations,
                   "method": sol.method, "dalpha_kernel": dk, "abs_diff": abs(dk - kern)}
    rep.tolerance = {"residual": MDE_RESIDUAL_TOL, "abs_diff": DALPHA_TOL}
    rep.passed = sol.residual <= MDE_RESIDUAL_TOL and abs(dk - kern) <= DALPHA_TOL
    return rep


def stability_exponent(p, pt: SpectralPoint, deltas=STABILITY_DELTAS):
    """Fitted exponent of ``||L_0^{-1}||`` against ``Delta`` along the rays of
    ``zeta1`` and ``zeta2``."""
    u1 = pt.zeta1 / abs(pt.zeta1)
    u2 = pt.zeta2 / abs(pt.zeta2)
    sig = [stability_min_singular(p, SpectralPoint((1 + d) * u1, (1 + d) * u2))
           for d in deltas]
    slope = np.polyfit(np.log(deltas), -np.log(sig), 1)[0]
    return float(slope), sig


def run_f_operator(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    p = profile_from(payload)
    pt = point_from(payload)
    pp = perron_vectors(p)
    top = f_operator_top_spectrum(p, pt, pp=pp)
    lams = [lam for *_, lam in predicted_f_eigenpairs(pt)]
    res = f_eigen_residuals(p, pt, pp)
    max_res = max(r for _, r in res.values())
    top_err = max(abs(top.max() - max(lams)), abs(top.min() - min(lams)))
    exponent, sig = stability_exponent(p, pt)
    rep.predicted = {"max": max(lams), "min": min(lams)}
    rep.details = {"top_spectrum": top, "extreme_error": top_err,
                   "eigen_residuals": {k: r for k, (_, r) in res.items()},
                   "max_residual": max_res, "stability_deltas": list(STABILITY_DELTAS),
                   "stability_min_singular": sig, "inverse_norm_exponent": exponent}
    rep.tolerance = {"extreme_error": F_SPECTRUM_TOL, "max_residual": F_SPECTRUM_TOL,
                     "inverse_norm_exponent_min": STABILITY_EXPONENT_MIN}
    rep.passed = (top_err <= F_SPECTRUM_TOL and max_res <= F_SPECTRUM_TOL
                  and exponent >= STABILITY_EXPONENT_MIN)
    return rep


# --- linearization and gap ---------------------------------------------------------

def _linearization_sample(payload, i):
    x = matrix_from(payload, i)
    pt = point_from(payload)
    a = payload["alpha"]
    e1 = linearization_check(x, pt, a).error
    e2 = linearization_check(x, pt, 2 * a).error
    ratio = e2 / e1 if e1 > 0 else math.inf
    lo, hi = ALPHA_RATIO_RANGE
    return {"error_alpha": e1, "error_2alpha": e2, "ratio": ratio,
            "within_range": lo <= ratio <= hi}


def run_linearization(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    rows = map_samples(_linearization_sample, cfg.numeric_dict(), range(cfg.samples),
                       cfg.workers)
    rep.samples = rows
    good = _ok(rows)
    rep.aggregate = {"error_alpha": aggregate(r["error_alpha"] for r in good),
                     "ratio": aggregate(r["ratio"] for r in good)}
    rep.predicted = {"ratio": 4.0}
    rep.tolerance = {"ratio_range": list(ALPHA_RATIO_RANGE)}
    rep.passed = _all_pass(rows, "within_range")
    return rep


def _gap_sample(payload, i):
    g = gap_report(matrix_from(payload, i), point_from(payload), payload["alpha"])
    return {"min_abs_eigenvalue": g.min_abs_eigenvalue, "threshold": g.threshold, "psi": g.psi}


def run_gap(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    rows = map_samples(_gap_sample, cfg.numeric_dict(), range(cfg.samples), cfg.workers)
    rep.samples = rows
    good = _ok(rows)
    n_pass = sum(1 for r in good if r["psi"])
    need = math.ceil(GAP_PASS_FRACTION * cfg.samples)
    rep.aggregate = {"min_abs_eigenvalue": aggregate(r["min_abs_eigenvalue"] for r in good)}
    rep.predicted = {"threshold": DEFAULT_KAPPA * point_from(cfg.numeric_dict()).delta ** 2 / 2}
    rep.details = {"passing_samples": n_pass, "required": need}
    rep.tolerance = {"pass_fraction": GAP_PASS_FRACTION}
    rep.passed = cfg.samples > 0 and n_pass >= need
    return rep


# --- dynamics ------------------------------------------------------------------------

def _decay_sample(payload, i):
    t = time_grid(payload["grid"])
    c = empirical_sqnorm_trace(matrix_from(payload, i), payload["g"], t)
    return {"values": c.values.tolist()}


def _hermitian_sample(payload, i):
    t = time_grid(payload["grid"])
    w = sample_wigner(payload["n"], payload["seed"], sample_index=i)
    return {"values": hermitian_sqnorm(w, t).values.tolist()}


def _curve_stats(rows, t):
    good = _ok(rows)
    if not good:
        return None, None
    vals = np.array([r["values"] for r in good])
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(len(good)) if len(good) > 1 \
        else np.full(t.size, np.nan)
    return mean, se


def _slope(t, values, window):
    return fit_decay_exponent(DecayCurve(t, values), window).slope


def _attach_slopes(rows, t, window):
    for r in _ok(rows):
        try:
            r["slope"] = _slope(t, np.array(r["values"]), window)
        except ValueError as exc:
            r["flagged"], r["error"] = True, f"ValueError: {exc}"


def run_decay(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    t = time_grid(cfg.grid)
    pp = perron_vectors(profile_from(payload))
    pred = predicted_sqnorm(pp, cfg.g, t).values
    window = cfg.window or [t[0], t[-1]]
    rows = map_samples(_decay_sample, payload, range(cfg.samples), cfg.workers)
    _attach_slopes(rows, t, window)
    mean, se = _curve_stats(rows, t)
    rep.samples = rows
    rep.curves = {"kind": "decay", "t": t, "predicted": pred,
                  "empirical_mean": mean if mean is not None else [None] * t.size,
                  "empirical_stderr": se if se is not None else [None] * t.size}
    pred_slope = _slope(t, pred, window)
    rep.predicted = {"c_s": pp.c_s, "slope": pred_slope}
    rep.details = {"window": window}
    rep.aggregate = {"slope": aggregate(r.get("slope") for r in _ok(rows))}
    if cfg.g != 1.0:
        rep.passed = None
    elif cfg.samples == 0:
        rep.tolerance = {"prediction_slope": PREDICTION_SLOPE_TOL}
        rep.passed = abs(pred_slope - CRITICAL_SLOPE) <= PREDICTION_SLOPE_TOL
    else:
        rep.tolerance = {"slope": DECAY_SLOPE_TOL}
        if mean is None:
            rep.passed = False
        else:
            s = _slope(t, mean, window)
            rep.details["mean_curve_slope"] = s
            rep.passed = abs(s - CRITICAL_SLOPE) <= DECAY_SLOPE_TOL
    return rep


def run_hermitian_decay(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    t = time_grid(cfg.grid)
    pred = semicircle_prediction(t).values
    window = cfg.window or [t[0], t[-1]]
    rows = map_samples(_hermitian_sample, payload, range(cfg.samples), cfg.workers)
    _attach_slopes(rows, t, window)
    mean, se = _curve_stats(rows, t)
    rep.samples = rows
    rep.curves = {"kind": "hermitian-decay", "t": t, "predicted": pred,
                  "empirical_mean": mean if mean is not None else [None] * t.size,
                  "empirical_stderr": se if se is not None else [None] * t.size}
    rep.predicted = {"slope": _slope(t, pred, window)}
    rep.aggregate = {"slope": aggregate(r.get("slope") for r in _ok(rows))}
    rep.tolerance = {"slope": DECAY_SLOPE_TOL}
    rep.details = {"window": window}
    if mean is None:
        rep.passed = None if cfg.samples == 0 else False
    else:
        s = _slope(t, mean, window)
        rep.details["mean_curve_slope"] = s
        rep.passed = abs(s - HERMITIAN_SLOPE) <= DECAY_SLOPE_TOL
    return rep


def _autocorr_sample(payload, i):
    taus = time_grid(payload["grid"])
    x = matrix_from(payload, i)
    quad = empirical_autocorr(x, payload["g"], taus)
    lyap = lyapunov_autocorr(x, payload["g"], taus)
    return {"values": quad.values.tolist(),
            "lyapunov_diff": float(np.max(np.abs(quad.values - lyap.values)))}


def run_autocorr(cfg: ExperimentConfig) -> RunReport:
    rep = _base_report(cfg)
    payload = cfg.numeric_dict()
    taus = time_grid(cfg.grid)
    pred = predicted_autocorr(cfg.g, taus).values
    rows = map_samples(_autocorr_sample, payload, range(cfg.samples), cfg.workers)
    good = _ok(rows)
    rep.samples = rows
    rep.predicted = {"tau0": pred[0], "rate": math.sqrt(1 - cfg.g**2)}
    rep.tolerance = {"relative_error": AUTOCORR_REL_TOL, "lyapunov_diff": LYAPUNOV_TOL}
    if good:
        emp = np.mean([r["values"] for r in good], axis=0)
        rel = np.abs(emp - pred) / pred
        lyap = max(r["lyapunov_diff"] for r in good)
        rep.curves = {"kind": "autocorr", "tau": taus, "empirical": emp, "predicted": pred,
                      "relative_error": rel}
        rep.details = {"max_relative_error": float(rel.max()), "max_lyapunov_diff": lyap}
        rep.passed = len(good) == len(rows) and rel.max() <= AUTOCORR_REL_TOL \
            and lyap <= LYAPUNOV_TOL
    else:
        rep.curves = {"kind": "autocorr", "tau": taus, "empirical": [None] * taus.size,
                      "predicted": pred, "relative_error": [None] * taus.size}
        rep.passed = None if cfg.samples == 0 else False
    return rep


RUNNERS = {
    "kernel-mc": run_kernel_mc,
    "functional": run_functional,
    "mde-check": run_mde_check,
    "f-operator": run_f_operator,
    "linearization": run_linearization,
    "gap": run_gap,
    "decay": run_decay,
    "hermitian-decay": run_hermitian_decay,
    "autocorr": run_autocorr,
}
