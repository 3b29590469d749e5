"""The acceptance suite: ten criteria with frozen tolerances.

``run_acceptance`` returns a RunReport whose ``criteria`` list holds one entry
per criterion with its measured quantities, tolerance and verdict.
"""

from __future__ import annotations

import math

import numpy as np

from ..dynamics import predicted_autocorr, predicted_sqnorm, semicircle_prediction
from ..kernel import (
    AnalyticFunction,
    Contour,
    SpectralPoint,
    empirical_resolvent_product,
    functional_trace,
    kernel_value,
    moment_series,
)
from ..mde import (
    f_eigen_residuals,
    f_operator_top_spectrum,
    linearization_check,
    mde_dalpha_kernel,
    mde_solve,
)
from ..profile import build_profile, perron_vectors
from ..sampler import EnsembleSpec, sample_matrix
from . import experiments as ex
from .config import ExperimentConfig, make_config
from .report import RunReport
from .runner import map_samples

# profiles used wherever several are required; the two-block one has unequal
# blocks so it is not row-stochastic and exercises a nontrivial kernel
ACCEPT_PROFILES = (
    {"kind": "constant"},
    {"kind": "row-stochastic-random", "low": 0.5, "high": 1.5},
    {"kind": "two-block", "within": 2.0, "across": 0.5, "sizes": [3, 7]},
)
ZETA_GRID = (1.3, 1.6 * complex(math.cos(0.6), math.sin(0.6)),
             2.0 * complex(math.cos(-1.1), math.sin(-1.1)))
SMALL_N = 10
CRITICAL_LIMIT = 1 / (2 * math.sqrt(math.pi))
LAWS_FOR_UNIVERSALITY = ("complex-gaussian", "real-gaussian", "rademacher")

CRITERIA = {
    1: "kernel vs Monte Carlo",
    2: "functional calculus",
    3: "MDE exactness and derivative",
    4: "F-operator spectrum and stability",
    5: "linearization",
    6: "spectral gap",
    7: "critical decay",
    8: "Hermitian contrast",
    9: "autocorrelation",
    10: "determinism",
}


def _small_profile(spec, seed):
    spec = dict(spec)
    return build_profile(spec.pop("kind"), SMALL_N, spec, seed=seed)


def _cfg(seed, workers, **fields) -> ExperimentConfig:
    return make_config({"seed": seed, "workers": workers, **fields})


def _entry(cid, passed, measured, tolerance):
    return {"id": cid, "name": CRITERIA[cid], "passed": bool(passed), "measured": measured,
            "tolerance": tolerance}


def _abs_error_sample(payload, i):
    x = sample_matrix(EnsembleSpec(build_profile("constant", payload["n"]), seed=i))
    return {"abs_error": abs(empirical_resolvent_product(x, SpectralPoint(1.5, 1.5)) - 0.8)}


def criterion_1(seed, workers):
    rep = ex.run_kernel_mc(_cfg(seed, workers, experiment="kernel-mc", n=400, samples=50))
    mean_err = rep.details.get("abs_mean_error", math.inf)
    # twenty consecutive seeds per size, one sample each
    med = {}
    for n in (200, 800):
        rows = map_samples(_abs_error_sample, {"n": n}, range(seed, seed + 20), workers)
        med[n] = float(np.median([r["abs_error"] for r in rows if not r.get("flagged")]))
    ok = mean_err <= 0.05 and med[800] < med[200] and rep.flagged == 0
    return _entry(1, ok, {"abs_mean_error": mean_err, "median_error_n200": med[200],
                          "median_error_n800": med[800], "flagged": rep.flagged},
                  "|mean - 0.8| <= 0.05; median error decreases from n=200 to n=800")


def criterion_2(seed, workers):
    contour = Contour()
    series_err = 0.0
    for spec in ACCEPT_PROFILES:
        p = _small_profile(spec, seed)
        for k in range(4):
            f = AnalyticFunction.monomial(k)
            oracle = moment_series(p, f, f)
            for mode in ("double", "fast"):
                series_err = max(series_err, abs(functional_trace(p, f, f, contour, mode)
                                                 - oracle))
    emp_err, flagged = 0.0, 0
    for k in range(4):
        rep = ex.run_functional(_cfg(seed, workers, experiment="functional", n=200, samples=2,
                                     power=k))
        flagged += rep.flagged
        emp_err = max([emp_err] + [r["abs_diff"] for r in rep.samples if not r.get("flagged")])
    ok = series_err <= 1e-8 and emp_err <= 1e-8 and flagged == 0
    return _entry(2, ok, {"max_series_error": series_err, "max_empirical_error": emp_err,
                          "flagged": flagged}, "1e-8 on both comparisons")


def criterion_3(seed, workers):
    max_res, max_diff = 0.0, 0.0
    for spec in ACCEPT_PROFILES:
        p = _small_profile(spec, seed)
        for z1 in ZETA_GRID:
            for z2 in ZETA_GRID:
                pt = SpectralPoint(z1, z2)
                max_res = max(max_res, mde_solve(p, pt, alpha=1e-3).residual)
                max_diff = max(max_diff, abs(mde_dalpha_kernel(p, pt, h=1e-4)
                                             - kernel_value(p, pt)))
    const = _small_profile(ACCEPT_PROFILES[0], seed)
    third = mde_dalpha_kernel(const, SpectralPoint(2.0, 2.0))
    ok = max_res <= 1e-12 and max_diff <= 1e-6 and abs(third - 1 / 3) <= 1e-6
    return _entry(3, ok, {"max_residual": max_res, "max_dalpha_error": max_diff,
                          "value_at_product_4": third},
                  "residual <= 1e-12; derivative within 1e-6; 1/3 within 1e-6")


def criterion_4(seed, workers):
    pt = SpectralPoint(1.5, 1.5)
    top_err, max_res, worst_exp = 0.0, 0.0, math.inf
    for spec in ACCEPT_PROFILES:
        p = _small_profile(spec, seed)
        pp = perron_vectors(p)
        top = f_operator_top_spectrum(p, pt, pp=pp)
        top_err = max(top_err, abs(top.max() - 1 / 2.25), abs(top.min() + 1 / 2.25))
        max_res = max([max_res] + [r for _, r in f_eigen_residuals(p, pt, pp).values()])
        worst_exp = min(worst_exp, ex.stability_exponent(p, pt)[0])
    ok = top_err <= 1e-8 and max_res <= 1e-8 and worst_exp >= -1.2
    return _entry(4, ok, {"extreme_eigenvalue_error": top_err, "max_eigen_residual": max_res,
                          "min_inverse_norm_exponent": worst_exp},
                  "1e-8 on extremes and residuals; exponent >= -1.2")


def _oracle_matrix_3():
    return sample_matrix(EnsembleSpec(build_profile("constant", 3), seed=0))


def criterion_5(seed, workers):
    rep = ex.run_linearization(_cfg(seed, workers, experiment="linearization", n=50,
                                    samples=10, alpha=1e-2))
    ratios = [r.get("ratio") for r in rep.samples]
    res = linearization_check(_oracle_matrix_3(), SpectralPoint(1.5, 1.5), 1e-3)
    ok = bool(rep.passed) and res.error <= 1e-4
    return _entry(5, ok, {"doubling_ratios": ratios, "errors_at_alpha":
                          [r.get("error_alpha") for r in rep.samples],
                          "n3_error": res.error},
                  "every ratio in [3, 5]; n=3 error <= 1e-4")


def criterion_6(seed, workers):
    rep = ex.run_gap(_cfg(seed, workers, experiment="gap", n=400, samples=20, alpha=0.0))
    return _entry(6, rep.passed, {"passing_samples": rep.details["passing_samples"],
                                  "min_abs_eigenvalue": rep.aggregate["min_abs_eigenvalue"]},
                  ">= 19 of 20 seeds above kappa Delta^2 / 2")


def criterion_7(seed, workers):
    pp = perron_vectors(build_profile("constant", 10))
    v = predicted_sqnorm(pp, 1.0, [100.0]).values[0]
    limit_rel = abs(10 * v / CRITICAL_LIMIT - 1)
    slopes = {}
    for law in LAWS_FOR_UNIVERSALITY:
        rep = ex.run_decay(_cfg(seed, workers, experiment="decay", n=1000, samples=1,
                                g=1.0, law=law))
        slopes[law] = rep.details.get("mean_curve_slope", math.nan)
    ref = slopes["complex-gaussian"]
    spread = max(abs(s - ref) for s in slopes.values())
    ok = limit_rel <= 0.01 and abs(ref + 0.5) <= 0.1 and spread <= 0.1
    return _entry(7, ok, {"sqrt_t_value_rel_error": limit_rel, "slopes": slopes,
                          "max_law_deviation": spread},
                  "1% on the limit; slope -0.5 +/- 0.1; laws within 0.1")


def criterion_8(seed, workers):
    v = semicircle_prediction([50.0]).values[0]
    rel = abs(v / (CRITICAL_LIMIT * 50.0**-1.5) - 1)
    rep = ex.run_hermitian_decay(_cfg(seed, workers, experiment="hermitian-decay", n=2000,
                                      samples=1))
    slope = rep.details.get("mean_curve_slope", math.nan)
    ok = rel <= 0.03 and abs(slope + 1.5) <= 0.1
    return _entry(8, ok, {"prediction_rel_error": rel, "slope": slope},
                  "3% at t=50; slope -1.5 +/- 0.1")


def criterion_9(seed, workers):
    exact = predicted_autocorr(0.6, [0.0]).values[0]
    rep = ex.run_autocorr(_cfg(seed, workers, experiment="autocorr", n=400, samples=1,
                               g=0.5))
    rel = rep.details.get("max_relative_error", math.inf)
    lyap = rep.details.get("max_lyapunov_diff", math.inf)
    ok = exact == 0.625 and rel <= 0.05 and lyap <= 1e-6
    return _entry(9, ok, {"value_g06_tau0": exact, "max_relative_error": rel,
                          "max_lyapunov_diff": lyap},
                  "0.625 exactly; 5% relative on [0, 5]; paths within 1e-6")


def criterion_10(seed, workers):
    cfg = dict(experiment="kernel-mc", n=100, samples=6)
    a = ex.run_kernel_mc(_cfg(seed, 1, **cfg)).to_json()
    b = ex.run_kernel_mc(_cfg(seed, 1, **cfg)).to_json()
    c = ex.run_kernel_mc(_cfg(seed, max(2, workers), **cfg)).to_json()
    return _entry(10, a == b == c, {"repeat_identical": a == b, "workers_identical": a == c},
                  "byte-identical reports")


CHECKS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
          6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_acceptance(cfg: ExperimentConfig, only=None) -> RunReport:
    rep = ex._base_report(cfg)
    for cid in sorted(only or CHECKS):
        rep.criteria.append(CHECKS[cid](cfg.seed, cfg.workers))
    rep.passed = all(c["passed"] for c in rep.criteria)
    rep.aggregate = {"passed": sum(c["passed"] for c in rep.criteria),
                     "total": len(rep.criteria)}
    return rep


def summary_table(report: RunReport) -> str:
    lines = [f"{'id':>3}  {'criterion':<36} result"]
    for c in report.criteria:
        lines.append(f"{c['id']:>3}  {c['name']:<36} {'PASS' if c['passed'] else 'FAIL'}")
    lines.append(f"{report.aggregate.get('passed', 0)}/{report.aggregate.get('total', 0)} "
                 "criteria passed")
    return "\n".join(lines)
