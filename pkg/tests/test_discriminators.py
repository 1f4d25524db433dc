import numpy as np
import pytest

from conftest import central_diff
from proxeq.discriminators import (
    LogRatioDiscriminator,
    PiecewiseLinearDiscriminator,
    QuadraticDiscriminator,
    c_concave_margin,
    eval_and_grad,
    project_c_concave,
    project_lipschitz,
    sym_to_vec,
    vec_to_sym,
)
from proxeq.fdivergence import BUILTIN, JSD, KL, PEARSON, get_spec


def test_quadratic_value_and_grad():
    d = QuadraticDiscriminator(np.eye(2), np.zeros(2))
    v, g, kink = eval_and_grad(d, np.array([1.0, 1.0]))
    assert v == 2.0
    np.testing.assert_array_equal(g, [2.0, 2.0])
    assert not kink


def test_negative_abs_right_of_knot():
    d = PiecewiseLinearDiscriminator.abs_like(0.0, -1.0)
    v, g, kink = eval_and_grad(d, 1.0)
    assert v == -1.0
    assert g[0] == -1.0
    assert not kink


def test_piecewise_kink_returns_right_slope():
    d = PiecewiseLinearDiscriminator.abs_like(0.0, -1.0)
    v, g, kink = eval_and_grad(d, 0.0)
    assert v == 0.0 and g[0] == -1.0 and kink


def test_log_ratio_vanishing_exponent_jsd():
    d = LogRatioDiscriminator.constant(JSD, 1)
    v, g, _ = eval_and_grad(d, np.array([0.7]))
    # f'_JSD(t) = log(2t / (t + 1)) vanishes at t = 1
    assert v == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(g, [0.0], atol=1e-15)


def _random_disc(rng, family, dim=2):
    if family == "quadratic":
        a = rng.standard_normal((dim, dim))
        return QuadraticDiscriminator(a + a.T, rng.standard_normal(dim), rng.standard_normal())
    if family == "piecewise":
        knots = np.sort(rng.uniform(-3, 3, 5))
        return PiecewiseLinearDiscriminator.from_slopes(knots, rng.uniform(-2, 2, 6), rng.standard_normal())
    spec = BUILTIN[rng.choice(list(BUILTIN))]
    p = 0.3 * rng.standard_normal((dim, dim))
    return LogRatioDiscriminator(p + p.T, 0.5 * rng.standard_normal(dim), 0.3 * rng.standard_normal(), spec)


@pytest.mark.parametrize("family", ["quadratic", "piecewise", "log_ratio"])
def test_gradient_matches_central_differences(rng, family):
    worst = 0.0
    for _ in range(100):
        d = _random_disc(rng, family)
        dim = d.dim
        x = rng.uniform(-1.5, 1.5, dim)
        if family == "piecewise" and np.min(np.abs(d.knots - x[0])) < 1e-3:
            continue
        fd = central_diff(lambda y: float(d.value(y.reshape(1, -1))[0]), x)
        g = np.ravel(eval_and_grad(d, x).grad)
        worst = max(worst, np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))
    assert worst <= 1e-6


def test_param_roundtrip(rng):
    for family in ("quadratic", "piecewise", "log_ratio"):
        d = _random_disc(rng, family)
        np.testing.assert_array_equal(d.with_params(d.params()).params(), d.params())


def test_sym_vec_roundtrip(rng):
    a = rng.standard_normal((3, 3))
    a = a + a.T
    np.testing.assert_allclose(vec_to_sym(sym_to_vec(a), 3), a)


def test_project_lipschitz_clips():
    d = PiecewiseLinearDiscriminator.from_slopes([0.0], [2.0, -0.5])
    p = project_lipschitz(d, 1.0)
    np.testing.assert_array_equal(p.slopes(), [1.0, -0.5])


def test_project_lipschitz_fixed_point():
    d = PiecewiseLinearDiscriminator.from_slopes([0.0, 1.0], [0.5, -1.0, 0.2], 3.0)
    assert project_lipschitz(d, 1.0) is d


def test_project_lipschitz_scaled_abs():
    d = PiecewiseLinearDiscriminator.abs_like(0.0, -3.0)
    p = project_lipschitz(d, 1.0)
    xs = np.linspace(-5, 5, 1001)
    # scan every segment for its slope
    slopes = np.diff(p.value(xs)) / np.diff(xs)
    assert np.max(np.abs(slopes)) <= 1 + 1e-12
    np.testing.assert_allclose(p.value(xs), -np.abs(xs), atol=1e-12)
    assert p.values[0] == d.values[0]


def test_project_lipschitz_random(rng):
    for _ in range(100):
        d = PiecewiseLinearDiscriminator.from_slopes(np.sort(rng.uniform(-3, 3, 6)), 3 * rng.standard_normal(7), rng.standard_normal())
        p = project_lipschitz(d, 1.0)
        assert np.max(np.abs(p.slopes())) <= 1 + 1e-12
        assert p.values[0] == d.values[0]


def test_project_c_concave_zero_unchanged():
    d = QuadraticDiscriminator.zero(2)
    assert project_c_concave(d, 1.0) is d


def test_project_c_concave_hessian_convention():
    p = project_c_concave(QuadraticDiscriminator(np.eye(2), np.ones(2)), 1.0)
    # clip the eigenvalues of 2A at eta, less the safety margin
    np.testing.assert_allclose(p.A, (0.5 - 0.5e-8) * np.eye(2), atol=1e-15)
    np.testing.assert_array_equal(p.b, np.ones(2))
    assert c_concave_margin(p, 1.0) >= 1e-8 - 1e-15


def test_project_c_concave_literal_convention():
    p = project_c_concave(QuadraticDiscriminator(2 * np.eye(1), [0.0]), 1.0, "literal")
    assert p.A[0, 0] == pytest.approx(1.0 - 1e-8)
    assert c_concave_margin(p, 1.0, "literal") == pytest.approx(1e-8)


def test_project_c_concave_feasible_unchanged():
    d = QuadraticDiscriminator(np.diag([0.2, -3.0]), [1.0, 2.0])
    assert project_c_concave(d, 1.0) is d


def test_project_c_concave_keeps_eigenvectors(rng):
    a = rng.standard_normal((3, 3))
    d = QuadraticDiscriminator(a + a.T, np.zeros(3))
    p = project_c_concave(d, 1.0)
    v0, v1 = np.linalg.eigvalsh(d.A), np.linalg.eigvalsh(p.A)
    np.testing.assert_allclose(v1, np.minimum(v0, 0.5 - 0.5e-8), atol=1e-12)


# -- f-divergence tables ------------------------------------------------------


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_conjugate_identity(name):
    spec = get_spec(name)
    assert spec.f(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-12)
    assert spec.conjugate_identity_error(np.linspace(0.1, 10, 100)) <= 1e-9


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_conjugate_is_supremum(name):
    # f*(s) = sup_t s t - f(t), brute force over t
    from scipy import optimize

    spec = get_spec(name)
    for t in (0.3, 1.0, 4.0):
        s = float(spec.f_prime(np.array([t]))[0])
        res = optimize.minimize_scalar(lambda x: -(s * x - spec.f(np.array([x]))[0]), bounds=(1e-9, 100), method="bounded", options={"xatol": 1e-12})
        assert float(spec.f_conj(np.array([s]))[0]) == pytest.approx(-res.fun, abs=1e-8)


def test_jsd_formula():
    t = np.linspace(0.1, 10, 50)
    np.testing.assert_allclose(JSD.f(t), t * np.log(t) - (t + 1) * np.log((t + 1) / 2), atol=1e-14)
    np.testing.assert_allclose(JSD.f_prime(t), np.log(2 * t / (t + 1)), atol=1e-14)


def test_exp_tables_agree_with_direct(rng):
    l = rng.uniform(-5, 5, 200)
    for spec in (JSD, KL, PEARSON):
        t = np.exp(l)
        np.testing.assert_allclose(spec.fprime_at_exp(l), spec.f_prime(t), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(spec.conj_fprime_at_exp(l), spec.f_conj_of_f_prime(t), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(spec.t2f2_at_exp(l), t**2 * spec.f_second(t), rtol=1e-10)


def test_admissibility():
    # t^2 f''(t): JSD t/(t+1), KL t, Pearson 2 t^2 are all non-decreasing
    assert JSD.admissible() and KL.admissible() and PEARSON.admissible()


def test_unknown_spec():
    with pytest.raises(ValueError, match="hellinger"):
        get_spec("hellinger")
