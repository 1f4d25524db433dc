import numpy as np
import pytest
from scipy import integrate, stats

from conftest import central_diff
from proxeq import games, oracles
from proxeq.discriminators import (
    LogRatioDiscriminator,
    PiecewiseLinearDiscriminator,
    QuadraticDiscriminator,
    project_c_concave,
    project_lipschitz,
)
from proxeq.fdivergence import JSD, KL
from proxeq.gauss_core import LinearGenerator
from proxeq.sobolev import closed_form_semi_norm_sq_quadratic
from proxeq.training import stationarity

SQ2PI = np.sqrt(2 / np.pi)


def _random_w(rng, dim, lo=0.2, hi=1.0):
    q1, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    q2, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (q1 * rng.uniform(lo, hi, dim)) @ q2.T


def _random_disc(rng, game):
    if game.kind == "w2_lq":
        a = rng.standard_normal((game.dim, game.dim))
        d = QuadraticDiscriminator(0.3 * (a + a.T), rng.standard_normal(game.dim))
        return project_c_concave(d, game.eta, margin=0.05)
    if game.kind == "wgan_1d":
        knots = np.sort(rng.uniform(-3, 3, 4))
        return project_lipschitz(PiecewiseLinearDiscriminator.from_slopes(knots, rng.uniform(-1.5, 1.5, 5)), 1.0)
    return LogRatioDiscriminator([[rng.uniform(-0.3, 0.3)]], [rng.uniform(-0.5, 0.5)], rng.uniform(-0.5, 0.5), game.fspec)


GAMES = [
    games.Game("w2_lq", 2.0, 1),
    games.Game("w2_lq", 1.5, 2, 0.7),
    games.Game("wgan_1d", 2.0),
    games.Game("fgan_gauss", 2.0, fspec=JSD),
    games.Game("fgan_gauss", 1.3, fspec=KL),
]
IDS = ["w2_1d", "w2_2d", "wgan", "fgan_jsd", "fgan_kl"]


def _random_gen(rng, game):
    return LinearGenerator(_random_w(rng, game.dim), rng.uniform(-1, 1, game.dim))


# -- values -------------------------------------------------------------------


def test_w2_zero_disc_value(rng):
    game = games.Game("w2_lq", 2.0, 2)
    for _ in range(10):
        assert games.value(game, _random_gen(rng, game), games.zero_disc(game)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_wgan_negative_abs_value(sigma):
    game = games.Game("wgan_1d", sigma)
    d = PiecewiseLinearDiscriminator.abs_like(0.0, -1.0)
    assert games.value(game, game.generator(1.0, 0.0), d) == pytest.approx(-sigma * SQ2PI + SQ2PI, abs=1e-12)


def test_fgan_realizable_constant_value():
    game = games.Game("fgan_gauss", 0.8, fspec=JSD)
    d = games.zero_disc(game)
    assert games.value(game, game.generator(0.8, 0.0), d) == pytest.approx(0.0, abs=1e-12)


def test_w2_value_against_sampling(rng):
    # E[D(X)] - E[D^c(G(Z))] with D^c evaluated by the brute-force grid supremum
    game = games.Game("w2_lq", 1.5, 1)
    d = QuadraticDiscriminator([[0.2]], [0.3])
    g = game.generator(0.7, 0.4)
    z = np.linspace(-8, 8, 161)
    pz = stats.norm.pdf(z)
    dc = oracles.c_transform_grid(d, 0.7 * z + 0.4, game.eta)
    e_dc = integrate.simpson(pz * dc, x=z)
    e_d = integrate.quad(lambda x: d.value(np.array([[x]]))[0] * stats.norm.pdf(x, 0, 1.5), -15, 15)[0]
    assert games.value(game, g, d) == pytest.approx(e_d - e_dc, abs=1e-6)


def test_wgan_value_against_quadrature(rng):
    game = games.Game("wgan_1d", 1.7)
    for _ in range(5):
        d = _random_disc(rng, game)
        w, u = rng.uniform(0.2, 1.0), rng.uniform(-1, 1)
        f = lambda x: d.value(np.array([x]))[0]
        ex = integrate.quad(lambda x: f(x) * stats.norm.pdf(x, 0, 1.7), -20, 20, points=list(d.knots), limit=200)[0]
        ey = integrate.quad(lambda x: f(x) * stats.norm.pdf(x, u, w), -20, 20, points=list(d.knots), limit=200)[0]
        assert games.value(game, game.generator(w, u), d) == pytest.approx(ex - ey, abs=1e-8)


def test_fgan_value_against_quadrature(rng):
    game = games.Game("fgan_gauss", 1.4, fspec=JSD)
    d = _random_disc(rng, game)
    w, u = 0.6, 0.3

    ex = integrate.quad(lambda x: stats.norm.pdf(x, 0, 1.4) * JSD.f_prime(np.exp(d.exponent(np.array([[x]]))))[0], -20, 20)[0]
    ey = integrate.quad(
        lambda x: stats.norm.pdf(x, u, w) * JSD.f_conj(JSD.f_prime(np.exp(d.exponent(np.array([[x]])))))[0], -20, 20
    )[0]
    assert games.value(game, game.generator(w, u), d) == pytest.approx(ex - ey, abs=1e-8)


def test_value_rejects_wrong_family():
    with pytest.raises(TypeError):
        games.value(GAMES[0], GAMES[0].generator(0.5, 0.0), PiecewiseLinearDiscriminator.abs_like())


def test_value_rejects_infeasible_quadratic():
    from proxeq.gauss_core import DomainError

    with pytest.raises(DomainError):
        games.value(GAMES[0], GAMES[0].generator(0.5, 0.0), QuadraticDiscriminator([[0.6]], [0.0]))


# -- gradients ----------------------------------------------------------------


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_constant_disc_zero_gen_gradient(rng, game):
    g = _random_gen(rng, game)
    dw, du = games.grad_generator(game, g, games.zero_disc(game))
    assert np.max(np.abs(dw)) <= 1e-12 and np.max(np.abs(du)) <= 1e-12


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_gen_gradient_matches_fd(rng, game):
    n = 100
    worst = 0.0
    for _ in range(n):
        g, d = _random_gen(rng, game), _random_disc(rng, game)
        grad = games.grad_generator_flat(game, g, d)
        fd = central_diff(lambda th: games.value(game, g.from_params(th), d), g.params())
        worst = max(worst, np.linalg.norm(fd - grad) / max(1.0, np.linalg.norm(grad)))
    assert worst <= 1e-5


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_disc_gradient_matches_fd(rng, game):
    n = 100
    worst = 0.0
    for _ in range(n):
        g, d = _random_gen(rng, game), _random_disc(rng, game)
        grad = games.grad_discriminator(game, g, d)
        fd = central_diff(lambda p: games.value(game, g, d.with_params(p)), d.params())
        worst = max(worst, np.linalg.norm(fd - grad) / max(1.0, np.linalg.norm(grad)))
    assert worst <= 1e-5


def test_w2_du_moment_formula(rng):
    game = games.Game("w2_lq", 1.5, 2)
    for _ in range(10):
        g, d = _random_gen(rng, game), _random_disc(rng, game)
        dc = oracles.c_transform_quadratic(d, game.eta)
        _, du = games.grad_generator(game, g, d)
        np.testing.assert_allclose(du, -(2 * dc.A @ g.u + dc.b), atol=1e-12)


def test_w2_zero_disc_b_gradient(rng):
    game = games.Game("w2_lq", 2.0, 2)
    g = _random_gen(rng, game)
    grad = games.grad_discriminator(game, g, games.zero_disc(game))
    np.testing.assert_allclose(grad[-2:], -g.u, atol=1e-14)


def test_w2_disc_hessian_matches_fd(rng):
    game = games.Game("w2_lq", 1.5, 2)
    g, d = _random_gen(rng, game), _random_disc(rng, game)
    h = games.hess_discriminator(game, g, d)
    p = d.params()
    cols = [central_diff(lambda q: games.grad_discriminator(game, g, d.with_params(q))[k], p) for k in range(p.size)]
    np.testing.assert_allclose(h, np.array(cols), atol=1e-5)


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_best_response_is_stationary(rng, game):
    for _ in range(5):
        g = _random_gen(rng, game)
        _, rd = stationarity(game, g, games.best_response_disc(game, g))
        assert rd <= 1e-6


# -- best responses -----------------------------------------------------------


def test_w2_best_response_closed_form():
    game = games.Game("w2_lq", 2.0, 1)
    d = games.best_response_disc(game, game.generator(0.5, 0.0))
    assert d.A[0, 0] == pytest.approx(0.375, abs=1e-15)
    assert d.b[0] == 0.0


def test_w2_best_response_gradient_is_brenier_displacement(rng):
    game = games.Game("w2_lq", 1.7, 2)
    g = _random_gen(rng, game)
    d = games.best_response_disc(game, g)
    t = oracles.brenier_map_gaussian(game.sigma, g.w, g.u)
    x = rng.standard_normal((10, 2))
    np.testing.assert_allclose(d.grad(x), game.eta * (x - t(x)), atol=1e-12)


def test_fgan_best_response_realizable_is_constant():
    for spec in (JSD, KL):
        game = games.Game("fgan_gauss", 0.9, fspec=spec)
        d = games.best_response_disc(game, game.generator(0.9, 0.0))
        x = np.linspace(-2, 2, 9)[:, None]
        np.testing.assert_allclose(d.value(x), spec.f_prime(np.array([1.0]))[0], atol=1e-12)


def test_wgan_best_response_below_one_is_negative_abs():
    game = games.Game("wgan_1d", 0.5)
    d = games.best_response_disc(game, game.generator(1.0, 0.0))
    x = np.array([-3.0, -1.0, -0.2, 0.3, 1.0, 4.0])
    np.testing.assert_allclose(d.value(x), -np.abs(x), atol=1e-6)


def test_wgan_best_response_structure():
    game = games.Game("wgan_1d", 2.0)
    d = games.best_response_disc(game, game.generator(1.0, 0.0))
    a1, a2 = oracles.wgan1d_density_crossings(2.0, 1.0, 0.0)
    assert d.left_slope == -1.0 and d.right_slope == 1.0
    assert d.value(np.array(0.0)) == pytest.approx(0.0, abs=1e-12)
    inside = (d.knots > a1 + 1e-9) & (d.knots < a2 - 1e-9)
    assert np.all(np.diff(d.slopes()) >= -1e-8)
    assert inside.sum() >= 60


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_best_response_is_maximizer(rng, game):
    n = 200
    for _ in range(3):
        g = _random_gen(rng, game)
        best = games.value(game, g, games.best_response_disc(game, g))
        others = [games.value(game, g, _random_disc(rng, game)) for _ in range(n)]
        assert best >= max(others) - 1e-6
        assert best >= -1e-8


# -- dual against primal -----------------------------------------------------------


@pytest.mark.parametrize("game", GAMES, ids=IDS)
def test_dual_equals_primal(rng, game):
    for _ in range(5):
        rep = games.dual_equals_primal_check(game, _random_gen(rng, game))
        assert rep.passed, rep.summary()


def test_w2_three_way_agreement(rng):
    game = games.Game("w2_lq", 2.0, 2, 1.3)
    g = _random_gen(rng, game)
    d = games.best_response_disc(game, g)
    dual = games.value(game, g, d)
    assert dual == pytest.approx(oracles.w2_gaussian(game.data, game.pushforward(g), game.eta), abs=1e-12)
    assert dual == pytest.approx(closed_form_semi_norm_sq_quadratic(game.data, d) / (2 * game.eta), abs=1e-12)


def test_realizable_dual_zero():
    for game, g in [
        (games.Game("w2_lq", 0.8), games.Game("w2_lq", 0.8).generator(0.8, 0.0)),
        (games.Game("wgan_1d", 0.8), games.Game("wgan_1d", 0.8).generator(0.8, 0.0)),
        (games.Game("fgan_gauss", 0.8, fspec=JSD), games.Game("fgan_gauss", 0.8, fspec=JSD).generator(0.8, 0.0)),
    ]:
        v = games.value(game, g, games.best_response_disc(game, g))
        assert v == pytest.approx(0.0, abs=1e-9)
        assert games.primal_value(game, g) == pytest.approx(0.0, abs=1e-9)


def test_wgan_dual_against_w1_sigma2():
    game = games.Game("wgan_1d", 2.0)
    g = game.generator(1.0, 0.0)
    v = games.value(game, g, games.best_response_disc(game, g))
    assert v == pytest.approx(oracles.w1_1d(game.data, game.pushforward(g)), abs=1e-3)
    assert v == pytest.approx(SQ2PI, abs=1e-3)


def test_game_validation():
    with pytest.raises(ValueError):
        games.Game("wgan_1d", 1.0, 2)
    with pytest.raises(ValueError):
        games.Game("fgan_gauss", 1.0)
    with pytest.raises(ValueError):
        games.Game("w2_lq", -1.0)
    with pytest.raises(ValueError):
        games.Game("gan", 1.0)
