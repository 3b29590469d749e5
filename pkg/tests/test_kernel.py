import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhrmt.errors import ContourError
from nhrmt.kernel import (
    AnalyticFunction,
    Contour,
    SpectralPoint,
    direct_functional_trace,
    empirical_functional_trace,
    empirical_resolvent_product,
    functional_trace,
    kernel_decomposition,
    kernel_value,
    moment_series,
)
from nhrmt.profile import VarianceProfile, apply_S, build_profile, normalize_profile, perron_vectors
from nhrmt.sampler import EnsembleSpec, sample_matrix

CONST = build_profile("constant", 8)
ROWSTOCH = build_profile("row-stochastic-random", 8, seed=2)
TWOBLOCK = build_profile("two-block", 8, {"within": 2.0, "across": 0.5, "sizes": [3, 5]})
PROFILES = [CONST, ROWSTOCH, TWOBLOCK]
ONE = AnalyticFunction.monomial(0)
IDENT = AnalyticFunction.monomial(1)

coeff = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)
poly = st.lists(coeff, min_size=1, max_size=9)


def test_constant_kernel_one_third():
    assert kernel_value(CONST, SpectralPoint(2, 2)) == pytest.approx(1 / 3, abs=1e-14)


@given(st.floats(1.05, 3.0), st.floats(0, 2 * np.pi), st.floats(1.05, 3.0),
       st.floats(0, 2 * np.pi))
def test_row_stochastic_kernel(r1, t1, r2, t2):
    pt = SpectralPoint(r1 * np.exp(1j * t1), r2 * np.exp(1j * t2))
    assert abs(kernel_value(ROWSTOCH, pt) - 1 / (pt.product - 1)) <= 1e-12


def test_two_by_two_closed_form():
    s = np.array([[0.6, 0.4], [0.2, 0.8]])
    p = normalize_profile(VarianceProfile(s))
    (a, b), (c, d) = 2 * np.eye(2) - p.s
    inv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    oracle = inv.sum() / 2
    assert abs(kernel_value(p, SpectralPoint(np.sqrt(2), np.sqrt(2))) - oracle) <= 1e-14


def test_kernel_reports_condition():
    val, cond = kernel_value(TWOBLOCK, SpectralPoint(1.5, 1.5), return_cond=True)
    assert np.isfinite(cond) and cond >= 1


def test_decomposition_row_stochastic():
    parts = kernel_decomposition(ROWSTOCH, perron_vectors(ROWSTOCH), SpectralPoint(1.4, 1.7j))
    assert abs(parts.complement_part) <= 1e-14


def test_decomposition_sums_non_stochastic(rng):
    p = normalize_profile(VarianceProfile(rng.uniform(0.1, 2.0, (3, 3))))
    assert np.ptp(p.s.sum(axis=1)) > 1e-3
    pt = SpectralPoint(1.3 + 0.4j, 1.8)
    parts = kernel_decomposition(p, perron_vectors(p), pt)
    assert abs(parts.total - kernel_value(p, pt)) <= 1e-12


def test_decomposition_constant():
    parts = kernel_decomposition(CONST, perron_vectors(CONST), SpectralPoint(2, 2))
    assert parts.perron_part == pytest.approx(1 / 3, abs=1e-14)
    assert abs(parts.complement_part) <= 1e-14


@pytest.mark.parametrize("mode", ["double", "fast"])
@pytest.mark.parametrize("p", PROFILES, ids=["constant", "rowstoch", "twoblock"])
def test_trace_of_identity(p, mode):
    assert abs(functional_trace(p, ONE, ONE, mode=mode) - 1) <= 1e-12


def test_identity_constant_profile():
    assert abs(functional_trace(CONST, IDENT, IDENT) - 1) <= 1e-12


def test_square_two_block_two_applications():
    sq = AnalyticFunction.monomial(2)
    oracle = np.mean(apply_S(TWOBLOCK, apply_S(TWOBLOCK, np.ones(8))))
    assert abs(functional_trace(TWOBLOCK, sq, sq) - oracle) <= 1e-12


@given(poly, poly, st.sampled_from(range(3)))
def test_series_identity(a, b, which):
    p = PROFILES[which]
    f, g = AnalyticFunction.polynomial(a), AnalyticFunction.polynomial(b)
    oracle = moment_series(p, f, g)
    for mode in ("double", "fast"):
        assert abs(functional_trace(p, f, g, mode=mode) - oracle) <= 1e-8


@given(poly, poly)
def test_node_doubling_converged(a, b):
    f, g = AnalyticFunction.polynomial(a), AnalyticFunction.polynomial(b)
    coarse = functional_trace(TWOBLOCK, f, g, Contour(nodes=64))
    fine = functional_trace(TWOBLOCK, f, g, Contour(nodes=128))
    assert abs(coarse - fine) <= 1e-9


@given(poly, poly)
def test_radius_independence(a, b):
    f, g = AnalyticFunction.polynomial(a), AnalyticFunction.polynomial(b)
    small = functional_trace(ROWSTOCH, f, g, Contour(radius=1.3))
    large = functional_trace(ROWSTOCH, f, g, Contour(radius=1.7))
    assert abs(small - large) <= 1e-8


def test_non_polynomial_function():
    # f = exp: series coefficients 1/k!
    from math import factorial
    f = AnalyticFunction.from_callable(np.exp)
    p = AnalyticFunction.polynomial([1 / factorial(k) for k in range(30)])
    assert abs(functional_trace(TWOBLOCK, f, f) - moment_series(TWOBLOCK, p, p)) <= 1e-10


def test_contour_validation():
    with pytest.raises(ValueError):
        Contour(radius=0.9)
    with pytest.raises(ValueError):
        Contour(nodes=7)


def _sample(n, seed=0, p=None):
    return sample_matrix(EnsembleSpec(p or build_profile("constant", n), seed=seed))


def test_empirical_identity_function_is_one():
    x = _sample(60)
    assert abs(empirical_functional_trace(x, ONE, ONE) - 1) <= 1e-13


def test_empirical_matches_direct_n200():
    x = _sample(200, seed=1)
    direct = np.trace(x @ x.conj().T) / 200
    assert abs(empirical_functional_trace(x, IDENT, IDENT) - direct) <= 1e-8
    assert abs(direct_functional_trace(x, IDENT, IDENT) - direct) <= 1e-12


def test_empirical_near_one_n400():
    x = _sample(400, seed=2)
    assert abs(empirical_functional_trace(x, IDENT, IDENT) - 1) <= 0.1


def test_empirical_rejects_small_contour():
    x = 2 * np.eye(5)
    with pytest.raises(ContourError):
        empirical_functional_trace(x, IDENT, IDENT)


def test_resolvent_product_zero_matrix():
    val = empirical_resolvent_product(np.zeros((6, 6)), SpectralPoint(2, 2))
    assert val == pytest.approx(0.25, abs=1e-15)


def test_resolvent_product_conjugation_symmetry():
    x = _sample(80, seed=3)
    z1, z2 = 1.4 + 0.3j, -1.2 + 0.9j
    a = empirical_resolvent_product(x, SpectralPoint(z1, z2))
    b = empirical_resolvent_product(x, SpectralPoint(z2, z1))
    assert abs(a - np.conj(b)) <= 1e-12


def test_resolvent_product_mean_near_kernel():
    vals = [empirical_resolvent_product(_sample(400, seed=s), SpectralPoint(1.5, 1.5))
            for s in range(50)]
    assert abs(np.mean(vals) - 0.8) <= 0.05


def test_monte_carlo_error_decreases_with_n():
    pt = SpectralPoint(1.5, 1.5)
    med = {}
    for n in (200, 800):
        med[n] = np.median([abs(empirical_resolvent_product(_sample(n, seed=s), pt) - 0.8)
                            for s in range(50)])
    assert med[800] < med[200]
