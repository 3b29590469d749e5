import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhrmt.dynamics import (
    AutocorrCurve,
    DecayCurve,
    empirical_autocorr,
    empirical_sqnorm_mc,
    empirical_sqnorm_trace,
    fit_decay_exponent,
    fit_decay_rate,
    geometric_grid,
    hermitian_sqnorm,
    lyapunov_autocorr,
    predicted_autocorr,
    predicted_sqnorm,
    semicircle_prediction,
    simulate_autocorr_em,
    write_curve_csv,
)
from nhrmt.errors import HorizonError
from nhrmt.profile import build_profile, perron_vectors
from nhrmt.sampler import EnsembleSpec, sample_matrix, sample_wigner

CONST_PP = perron_vectors(build_profile("constant", 10))
LIMIT = 1 / (2 * math.sqrt(math.pi))


def i0_series(x, terms=200):
    """Modified Bessel I_0 by its power series sum (x/2)^{2k} / (k!)^2."""
    total, term = 0.0, 1.0
    for k in range(terms):
        total += term
        term *= (x / 2) ** 2 / (k + 1) ** 2
    return total


def i1_series(x, terms=200):
    total, term = 0.0, x / 2
    for k in range(terms):
        total += term
        term *= (x / 2) ** 2 / ((k + 1) * (k + 2))
    return total


def _x(n, seed=0, law="complex-gaussian", profile=None):
    p = profile or build_profile("constant", n)
    return sample_matrix(EnsembleSpec(p, law, seed))


def test_prediction_at_zero_is_one():
    assert predicted_sqnorm(CONST_PP, 1.0, [0.0]).values[0] == pytest.approx(1.0, abs=1e-15)


def test_prediction_bessel_value():
    oracle = math.exp(-2) * sum(1 / math.factorial(k) ** 2 for k in range(30))
    assert oracle == pytest.approx(0.30851, abs=1e-5)
    assert predicted_sqnorm(CONST_PP, 1.0, [1.0]).values[0] == pytest.approx(oracle, rel=1e-13)


@given(st.floats(0.01, 1.0), st.floats(0.0, 20.0))
def test_prediction_matches_i0_series(g, t):
    val = predicted_sqnorm(CONST_PP, g, [t]).values[0]
    assert val == pytest.approx(math.exp(-2 * t) * i0_series(2 * g * t), rel=1e-11)


def test_prediction_scaled_by_c_s():
    p = build_profile("two-block", 10, {"within": 2.0, "across": 0.5, "sizes": [3, 7]})
    pp = perron_vectors(p)
    assert pp.c_s < 0.99
    t = [0.0, 2.0, 7.0]
    np.testing.assert_allclose(predicted_sqnorm(pp, 0.7, t).values,
                               pp.c_s * predicted_sqnorm(CONST_PP, 0.7, t).values, rtol=1e-14)


def test_critical_limit_constant():
    val = predicted_sqnorm(CONST_PP, 1.0, [100.0]).values[0]
    assert 10 * val == pytest.approx(LIMIT, rel=0.01)


def test_prediction_slope_window():
    c = predicted_sqnorm(CONST_PP, 1.0, geometric_grid(50, 200))
    assert -0.52 <= fit_decay_exponent(c, (50, 200)).slope <= -0.48


def test_prediction_rejects_bad_g():
    with pytest.raises(ValueError):
        predicted_sqnorm(CONST_PP, 1.5, [1.0])
    with pytest.raises(ValueError):
        predicted_sqnorm(CONST_PP, 0.0, [1.0])


def test_geometric_grid_density():
    g = geometric_grid(1, 100)
    assert g.size == 81 and g[0] == 1 and g[-1] == pytest.approx(100)


def test_trace_at_zero_exactly_one():
    assert empirical_sqnorm_trace(_x(50), 1.0, [0.0]).values[0] == pytest.approx(1.0, abs=1e-14)


def test_trace_zero_matrix():
    t = np.array([0.0, 0.5, 3.0, 10.0])
    c = empirical_sqnorm_trace(np.zeros((5, 5)), 0.4, t)
    np.testing.assert_allclose(c.values, np.exp(-2 * t), rtol=1e-13)


def test_trace_matches_expm_oracle():
    import scipy.linalg as la
    x = _x(40, 3)
    t = np.array([0.3, 1.7, 4.0])
    c = empirical_sqnorm_trace(x, 0.8, t)
    oracle = [np.linalg.norm(la.expm(ti * (0.8 * x - np.eye(40)))) ** 2 / 40 for ti in t]
    np.testing.assert_allclose(c.values, oracle, rtol=1e-10)


def test_trace_horizon_guard():
    with pytest.raises(HorizonError):
        empirical_sqnorm_trace(2.0 * np.eye(3), 1.0, [1.0, 500.0])


def test_mc_converges_to_trace():
    x = _x(100, 1)
    t = geometric_grid(0.1, 10)
    tr = empirical_sqnorm_trace(x, 1.0, t)
    mc = empirical_sqnorm_mc(x, 1.0, t, n_init=2000, seed=5)
    assert np.all(np.abs(mc.values - tr.values) <= 3 * mc.stderr)


def test_mc_unit_initial_condition_and_seed():
    x = _x(30, 2)
    a = empirical_sqnorm_mc(x, 1.0, [0.0, 1.0], n_init=50, seed=9)
    b = empirical_sqnorm_mc(x, 1.0, [0.0, 1.0], n_init=50, seed=9)
    assert a.values[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        empirical_sqnorm_mc(x, 1.0, [0.0], n_init=0, seed=1)


def test_curves_positive():
    x = _x(60, 4)
    t = geometric_grid(0.1, 30)
    assert np.all(empirical_sqnorm_trace(x, 1.0, t).values > 0)
    assert np.all(predicted_sqnorm(CONST_PP, 1.0, t).values > 0)
    assert np.all(semicircle_prediction(t).values > 0)


def test_curve_validation():
    with pytest.raises(ValueError):
        DecayCurve([0.0, 0.0], [1.0, 1.0])


def test_semicircle_and_hermitian_at_zero():
    assert semicircle_prediction([0.0]).values[0] == pytest.approx(1.0, abs=1e-12)
    w = sample_wigner(50, seed=1)
    assert hermitian_sqnorm(w, [0.0]).values[0] == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.05, 60.0))
def test_semicircle_matches_bessel_oracle(t):
    oracle = math.exp(-2 * t) * i1_series(2 * t) / t
    assert semicircle_prediction([t]).values[0] == pytest.approx(oracle, rel=1e-9)


def test_semicircle_asymptote():
    val = semicircle_prediction([50.0]).values[0]
    assert val == pytest.approx(LIMIT * 50.0**-1.5, rel=0.03)


def test_hermitian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_sqnorm(np.array([[0.0, 1.0], [0.0, 0.0]]), [1.0])


def test_wigner_slope():
    t = np.arange(10.0, 51.0)
    c = hermitian_sqnorm(sample_wigner(2000, seed=0), t)
    assert abs(fit_decay_exponent(c, (10, 50)).slope + 1.5) <= 0.1


def test_autocorr_predicted_values():
    assert predicted_autocorr(0.6, [0.0]).values[0] == 0.625
    assert predicted_autocorr(1e-9, [1.0]).values[0] == pytest.approx(math.exp(-1) / 2,
                                                                       rel=1e-12)
    c = predicted_autocorr(0.8, np.linspace(0, 5, 21))
    assert fit_decay_rate(c, (0, 5)) == pytest.approx(0.6, abs=1e-10)
    with pytest.raises(ValueError):
        predicted_autocorr(1.0, [0.0])


def test_autocorr_zero_matrix_exact():
    taus = np.linspace(0, 6, 13)
    for fn in (empirical_autocorr, lyapunov_autocorr):
        c = fn(np.zeros((4, 4)), 0.5, taus)
        np.testing.assert_allclose(c.values, np.exp(-taus) / 2, atol=1e-10)


def test_autocorr_paths_agree():
    x = _x(100, 7)
    taus = np.linspace(0, 5, 11)
    quad = empirical_autocorr(x, 0.5, taus)
    lyap = lyapunov_autocorr(x, 0.5, taus)
    assert np.max(np.abs(quad.values - lyap.values)) <= 1e-6
    assert np.argmax(quad.values) == 0


def test_autocorr_matches_prediction_n400():
    taus = np.linspace(0, 5, 21)
    emp = empirical_autocorr(_x(400, 0), 0.5, taus).values
    pred = predicted_autocorr(0.5, taus).values
    assert np.max(np.abs(emp - pred) / pred) <= 0.05


def test_autocorr_tail_guard():
    with pytest.raises(HorizonError):
        empirical_autocorr(_x(20, 1), 0.5, [0.0, 1.0], u_max=1.0)


def test_euler_maruyama_smoke():
    c = simulate_autocorr_em(np.zeros((20, 20)), 0.5, [0.0, 1.0], t_burn=5.0, t_run=40.0,
                             dt=1e-2, seed=1)
    assert c.values[0] == pytest.approx(0.5, rel=0.2)
    assert c.values[1] == pytest.approx(math.exp(-1) / 2, rel=0.3)


def test_fit_synthetic_power_law():
    t = geometric_grid(1, 100)
    assert fit_decay_exponent(DecayCurve(t, t**-0.5), (1, 100)).slope == pytest.approx(
        -0.5, abs=1e-10)


def test_fit_synthetic_exponential():
    tau = np.linspace(0, 5, 30)
    c = AutocorrCurve(tau, 3 * np.exp(-0.6 * tau), 0.5)
    assert fit_decay_rate(c, (0, 5)) == pytest.approx(0.6, abs=1e-10)


def test_fit_rejects_nonpositive():
    with pytest.raises(ValueError):
        fit_decay_exponent(DecayCurve([1.0, 2.0, 3.0], [1.0, 0.0, 1.0]), (1, 3))


def test_curve_csv(tmp_path):
    c = predicted_sqnorm(CONST_PP, 1.0, [0.0, 1.0])
    c.meta.update(profile_id="constant", seed=0)
    path = tmp_path / "c.csv"
    write_curve_csv([c], path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t_or_tau", "value", "source", "g", "profile_id", "seed"]
    assert rows[1][2] == "prediction" and float(rows[2][1]) == c.values[1]


@pytest.mark.xfail(strict=True, reason="a single finite-N sample has eigenvalues beyond "
                   "the unit circle whose growth dominates the transient after t ~ 3")
def test_subleading_term_decays_exponentially():
    p = build_profile("two-block", 400, {"within": 2.0, "across": 0.5, "sizes": [100, 300]})
    t = np.linspace(1, 10, 19)
    diff = np.abs(empirical_sqnorm_trace(_x(400, 0, profile=p), 1.0, t).values
                  - predicted_sqnorm(perron_vectors(p), 1.0, t).values)
    assert -np.polyfit(t, np.log(diff), 1)[0] > 0


@pytest.mark.xfail(strict=True, reason="at n = 800 the largest real part of the spectrum "
                   "fluctuates by O(n^-1/2) per sample, which moves the slope on [10, 60] by "
                   "more than 0.1")
def test_universality_across_laws():
    t = np.arange(10.0, 61.0)
    slopes = [fit_decay_exponent(empirical_sqnorm_trace(_x(800, 0, law), 1.0, t), (10, 60)).slope
              for law in ("complex-gaussian", "real-gaussian", "rademacher")]
    assert max(slopes) - min(slopes) <= 0.2
    assert all(abs(s - slopes[0]) <= 0.1 for s in slopes)
