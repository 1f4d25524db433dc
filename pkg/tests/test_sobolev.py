import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxeq.discriminators import PiecewiseLinearDiscriminator, QuadraticDiscriminator
from proxeq.gauss_core import Gaussian
from proxeq.sobolev import (
    SampleSet,
    SobolevMetric,
    closed_form_semi_norm_sq_piecewise,
    closed_form_semi_norm_sq_quadratic,
    semi_inner,
    semi_norm_sq,
)


def _metric(rng, n=200, dim=1):
    return SobolevMetric(SampleSet(rng.standard_normal((n, dim))))


def _quad(rng, dim):
    a = rng.standard_normal((dim, dim))
    return QuadraticDiscriminator(a + a.T, rng.standard_normal(dim), rng.standard_normal())


def test_constants_have_zero_norm(rng):
    m = _metric(rng, dim=2)
    c = QuadraticDiscriminator(np.zeros((2, 2)), np.zeros(2), 5.0)
    assert semi_inner(m, c, c) == 0.0
    assert semi_norm_sq(m, c) == 0.0


def test_linear_functions(rng):
    m = _metric(rng)
    d1 = QuadraticDiscriminator([[0.0]], [1.0])
    d2 = QuadraticDiscriminator([[0.0]], [2.0])
    assert semi_inner(m, d1, d2) == pytest.approx(2.0, abs=1e-14)


def test_negative_abs_unit_norm(rng):
    pts = rng.standard_normal(100)
    pts = pts[pts != 0]
    m = SobolevMetric(SampleSet(pts))
    assert semi_norm_sq(m, PiecewiseLinearDiscriminator.abs_like(0.0, -1.0)) == pytest.approx(1.0, abs=1e-14)


def test_kink_flagged():
    m = SobolevMetric(SampleSet(np.array([-1.0, 0.0, 1.0])))
    d = PiecewiseLinearDiscriminator.abs_like(0.0, -1.0)
    assert m.kinks(d) == 1
    # right-hand slope -1 at the knot
    assert semi_norm_sq(m, d) == pytest.approx(1.0)


def test_bilinearity_identity(rng):
    m = _metric(rng, dim=2)
    for _ in range(20):
        d1, d2 = _quad(rng, 2), _quad(rng, 2)
        lhs = m.distance_sq(d1, d2)
        rhs = semi_norm_sq(m, d1) - 2 * semi_inner(m, d1, d2) + semi_norm_sq(m, d2)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
        assert semi_norm_sq(m, d1 - d2) == pytest.approx(lhs, rel=1e-12, abs=1e-12)


def test_cauchy_schwarz(rng):
    m = _metric(rng, dim=2)
    for _ in range(500):
        d1, d2 = _quad(rng, 2), _quad(rng, 2)
        assert semi_inner(m, d1, d2) ** 2 <= semi_norm_sq(m, d1) * semi_norm_sq(m, d2) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-10, 10, allow_nan=False))
def test_scale_law(seed, c):
    rng = np.random.default_rng(seed)
    m = _metric(rng, n=50, dim=2)
    d = _quad(rng, 2)
    assert semi_norm_sq(m, d.scaled(c)) == pytest.approx(c * c * semi_norm_sq(m, d), rel=1e-12, abs=1e-12)
    assert semi_norm_sq(m, d) >= 0


def test_closed_form_linear():
    d = QuadraticDiscriminator(np.zeros((3, 3)), [1.0, 0.0, 0.0])
    assert closed_form_semi_norm_sq_quadratic(Gaussian.isotropic(2.0, 3, [1.0, 2.0, 3.0]), d) == 1.0


@pytest.mark.parametrize("dim,sigma", [(1, 2.0), (3, 0.5)])
def test_closed_form_half_identity(dim, sigma):
    d = QuadraticDiscriminator(0.5 * np.eye(dim), np.zeros(dim))
    assert closed_form_semi_norm_sq_quadratic(Gaussian.isotropic(sigma, dim), d) == pytest.approx(dim * sigma**2)


def test_closed_form_against_samples(rng):
    data = Gaussian([0.3, -0.2], [[1.5, 0.4], [0.4, 0.8]])
    for _ in range(5):
        d = _quad(rng, 2)
        m = SobolevMetric(SampleSet.from_data(data, 100_000, int(rng.integers(1 << 30))))
        exact = closed_form_semi_norm_sq_quadratic(data, d)
        assert semi_norm_sq(m, d) == pytest.approx(exact, rel=1e-2)


def test_empirical_convergence_rate(rng):
    data = Gaussian.isotropic(1.3, 2)
    n = 10_000
    d = _quad(rng, 2)
    exact = closed_form_semi_norm_sq_quadratic(data, d)
    for rep in range(3):
        m = SobolevMetric(SampleSet.from_data(data, n, rep))
        assert abs(semi_norm_sq(m, d) - exact) / exact <= 3 / np.sqrt(n)


def test_gauss_hermite_exact_for_quadratics(rng):
    data = Gaussian([0.5, -1.0], [[2.0, 0.3], [0.3, 0.7]])
    m = SobolevMetric(SampleSet.gauss_hermite(data, 8))
    for _ in range(10):
        d = _quad(rng, 2)
        assert semi_norm_sq(m, d) == pytest.approx(closed_form_semi_norm_sq_quadratic(data, d), rel=1e-12)


def test_piecewise_closed_form(rng):
    data = Gaussian.isotropic(1.2, 1)
    d = PiecewiseLinearDiscriminator.from_slopes(np.sort(rng.uniform(-2, 2, 4)), rng.uniform(-1, 1, 5))
    m = SobolevMetric(SampleSet.from_data(data, 200_000, 3))
    assert semi_norm_sq(m, d) == pytest.approx(closed_form_semi_norm_sq_piecewise(data, d), rel=1e-2)


def test_gram_matches_distance(rng):
    m = _metric(rng, dim=2)
    d1, d2 = _quad(rng, 2), _quad(rng, 2)
    dp = d1.params() - d2.params()
    assert dp @ m.gram(d1) @ dp == pytest.approx(m.distance_sq(d1, d2), rel=1e-10)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        SampleSet(np.zeros((0, 1)))
    with pytest.raises(ValueError):
        SampleSet(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((2, 1)), np.array([1.0, -1.0]))


def test_sample_set_frozen_by_seed():
    data = Gaussian.isotropic(2.0, 2)
    a, b = SampleSet.from_data(data, 50, 7), SampleSet.from_data(data, 50, 7)
    np.testing.assert_array_equal(a.points, b.points)
