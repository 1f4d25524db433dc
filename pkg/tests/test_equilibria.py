import numpy as np
import pytest

from proxeq import equilibria, games
from proxeq.fdivergence import get_spec
from proxeq.gauss_core import LinearGenerator
from proxeq.sobolev import SampleSet, SobolevMetric
from proxeq.equilibria import BALL, FLOOR


def _metric(game):
    return SobolevMetric(SampleSet.gauss_hermite(game.data, 8))


# -- local Nash --------------------------------------------------------------


def test_local_nash_below_one_w2():
    game = games.Game("w2_lq", 0.5, 1)
    g = LinearGenerator([[1.0]], [0.0], FLOOR)
    rep = equilibria.check_local_nash(game, g, games.best_response_disc(game, g))
    assert rep.passed, rep.to_dict()


def test_local_nash_below_one_wgan():
    game = games.Game("wgan_1d", 0.5)
    g = LinearGenerator([[1.0]], [0.0], FLOOR)
    rep = equilibria.check_local_nash(game, g, games.best_response_disc(game, g))
    assert rep.passed, rep.to_dict()


def test_local_nash_realizable():
    game = games.Game("w2_lq", 0.8, 1)
    g = game.generator(0.8, 0.0)
    assert equilibria.check_local_nash(game, g, games.zero_disc(game)).passed


def test_local_nash_fails_above_one():
    sigma = 2.0
    game = games.Game("w2_lq", sigma, 1)
    g = equilibria.w2_minimizer(sigma)
    rep = equilibria.check_local_nash(game, g, games.best_response_disc(game, g))
    assert not rep.passed
    # the tangent direction is u, and the u-curvature is -eta (sigma - 1)
    eig = rep.points[0]["generator_hessian_eigs"]
    assert min(eig) <= -(sigma - 1) + 1e-4


# -- non-existence -----------------------------------------------------------


def test_no_nash_w2_1d_grid():
    grid = equilibria.generator_grid(np.linspace(-1, 1, 11), np.linspace(-2, 2, 10))
    rep = equilibria.certify_no_nash_w2(2.0, grid)
    assert rep.passed
    assert equilibria.GRID_NOTE in rep.notes
    # W = 0 is skipped or certified, never failed
    assert len(rep.points) >= 100


def test_no_nash_w2_curvature_closed_form():
    # the u-Hessian of V(G, D*) is -2 A_c, which equals -eta (sigma - 1) I on the minimizer
    for sigma in (1.01, 1.5, 3.0):
        rep = equilibria.certify_no_nash_w2(sigma, [equilibria.w2_minimizer(sigma)])
        assert rep.points[0]["curvature"] == pytest.approx(-(sigma - 1), abs=1e-9)


def test_no_nash_w2_2d_grid():
    grid = equilibria.generator_grid_2d([0.2, 0.7, 1.0], np.linspace(0, np.pi, 4, endpoint=False), [np.zeros(2), np.array([0.5, -1.0])])
    rep = equilibria.certify_no_nash_w2(2.0, grid)
    assert rep.passed and len(rep.points) == len(grid)


def test_no_nash_w2_needs_sigma_above_one():
    with pytest.raises(ValueError):
        equilibria.certify_no_nash_w2(1.0, [equilibria.w2_minimizer(1.0)])


@pytest.mark.parametrize("name", ["jsd", "kl"])
def test_no_nash_fgan(name):
    grid = equilibria.generator_grid([0.5, 1.0], [0.0, 1.0])
    rep = equilibria.certify_no_nash_fgan(get_spec(name), 2.0, grid)
    assert rep.passed, [c.to_dict() for c in rep.failures()]


def test_no_nash_fgan_refusals():
    grid = equilibria.generator_grid([0.5], [0.0])
    assert equilibria.certify_no_nash_fgan(get_spec("jsd"), 0.5, grid).verdict == "refused"
    bad = [s for s in ("reverse_kl", "pearson_chi2", "squared_hellinger", "total_variation", "jsd", "kl") if not _admissible(s)]
    for s in bad:
        assert equilibria.certify_no_nash_fgan(get_spec(s), 2.0, grid).verdict == "refused"


def _admissible(name):
    try:
        return get_spec(name).admissible()
    except ValueError:
        return True


def test_no_nash_wgan():
    grid = [LinearGenerator([[1.0]], [0.0]), LinearGenerator([[0.5]], [0.3])]
    rep = equilibria.certify_no_nash_wgan1d(2.0, grid)
    assert rep.passed, [c.to_dict() for c in rep.failures()]
    for p in rep.points:
        assert p["curvature"] < 0
    with pytest.raises(ValueError):
        equilibria.certify_no_nash_wgan1d(0.5, grid)


# -- realizable saddle -------------------------------------------------------


@pytest.mark.parametrize("kind", ["w2_lq", "wgan_1d"])
def test_realizable_saddle(kind):
    game = games.Game(kind, 0.8, 1) if kind == "w2_lq" else games.Game(kind, 0.8)
    g = game.generator(0.8, 0.0)
    gen_grid = equilibria.generator_grid(np.linspace(-1, 1, 21), np.linspace(-1, 1, 5))
    if kind == "w2_lq":
        disc_grid = equilibria.quadratic_disc_grid(np.linspace(-1, 0.45, 10), np.linspace(-1, 1, 10))
    else:
        from proxeq.discriminators import PiecewiseLinearDiscriminator

        rng = np.random.default_rng(0)
        disc_grid = [PiecewiseLinearDiscriminator.from_slopes(np.linspace(-3, 3, 7), rng.uniform(-1, 1, 8)) for _ in range(50)]
    rep = equilibria.check_realizable_saddle(game, g, gen_grid, disc_grid)
    assert rep.passed, [c.to_dict() for c in rep.failures()]


def test_realizable_saddle_detects_wrong_point():
    game = games.Game("w2_lq", 0.8, 1)
    disc_grid = equilibria.quadratic_disc_grid(np.linspace(-1, 0.45, 5), np.linspace(-1, 1, 5))
    gen_grid = equilibria.generator_grid([0.8], [0.0])
    assert not equilibria.check_realizable_saddle(game, game.generator(0.5, 0.2), gen_grid, disc_grid).passed


# -- proximal equilibria -----------------------------------------------------

PE_GAME = games.Game("w2_lq", 2.0, 1)
PE_GEN = equilibria.generator_grid(np.linspace(-1, 1, 9), np.linspace(-1, 1, 9))
PE_DISC = equilibria.quadratic_disc_grid(np.linspace(-1, 0.45, 9), np.linspace(-1, 1, 9))


def _pe(lam):
    g = equilibria.w2_minimizer(2.0)
    d = games.best_response_disc(PE_GAME, g)
    return equilibria.check_proximal_equilibrium(PE_GAME, g, d, lam, _metric(PE_GAME), PE_GEN, PE_DISC)


def test_proximal_equilibrium_at_unit_lambda():
    rep = _pe(1.0)
    assert rep.passed, [c.to_dict() for c in rep.failures()]
    # the discriminator side is a plain max over the grid, checked independently
    g = equilibria.w2_minimizer(2.0)
    d = games.best_response_disc(PE_GAME, g)
    v = games.value(PE_GAME, g, d)
    assert max(games.value(PE_GAME, g, dd) for dd in PE_DISC) <= v + 1e-12


def test_proximal_equilibrium_fails_at_large_lambda():
    assert not _pe(1000.0).passed


def test_proximal_equilibrium_at_zero_lambda():
    assert _pe(0.0).passed


def test_hierarchy():
    g = equilibria.w2_minimizer(2.0)
    good = (g, games.best_response_disc(PE_GAME, g))
    other = PE_GAME.generator(0.5, 0.5)
    bad = (other, games.best_response_disc(PE_GAME, other))
    m = _metric(PE_GAME)
    rep = equilibria.pe_hierarchy_check(PE_GAME, 0.1, 1.0, [good, bad], m, PE_GEN, PE_DISC)
    assert rep.passed
    assert [p["lam2"] for p in rep.points] == ["pass", "fail"]
    assert all(c.passed for c in equilibria.pe_hierarchy_check(PE_GAME, 1.0, 1.0, [good], m, PE_GEN, PE_DISC).conditions)
    with pytest.raises(ValueError):
        equilibria.pe_hierarchy_check(PE_GAME, 2.0, 1.0, [good], m, PE_GEN, PE_DISC)


# -- closed-form inequalities ------------------------------------------------


def test_w2_gap_bound_inequality_grid():
    grid = equilibria.psd_generator_grid(np.linspace(0, 1, 10), np.linspace(-2, 2, 5))
    rep = equilibria.verify_thm2_inequality(2.0, 1.0, grid)
    assert rep.passed
    assert min(p["slack"] for p in rep.points) >= -1e-6
    # the five W = 0 points have no strictly c-concave potential
    assert len(rep.points) == 45
    assert sum(n.startswith("skipped") for n in rep.notes) == 5


def test_w2_gap_bound_equality_at_minimizer():
    rep = equilibria.verify_thm2_inequality(2.0, 1.0, [equilibria.w2_minimizer(2.0)])
    p = rep.points[0]
    assert p["value_gap"] == pytest.approx(0.0, abs=1e-12) and p["norm_sq"] == pytest.approx(0.0, abs=1e-12)


def test_w2_gap_bound_strict_off_minimizer():
    rep = equilibria.verify_thm2_inequality(2.0, 1.0, [LinearGenerator([[0.5]], [0.7])])
    assert rep.points[0]["slack"] > 1e-3


def test_w2_gap_bound_eta_scaling():
    # both the value gap and the bound are linear in eta
    g = [LinearGenerator([[0.4]], [0.3])]
    a = equilibria.verify_thm2_inequality(2.0, 1.0, g).points[0]
    b = equilibria.verify_thm2_inequality(2.0, 2.0, g).points[0]
    assert b["value_gap"] == pytest.approx(2 * a["value_gap"], rel=1e-10)
    assert b["norm_sq"] / (2 * 2.0) == pytest.approx(2 * a["norm_sq"] / 2.0, rel=1e-10)


def test_w2_gap_bound_rejects_non_psd():
    with pytest.raises(ValueError):
        equilibria.verify_thm2_inequality(2.0, 1.0, [LinearGenerator([[-0.5]], [0.0])])
    with pytest.raises(ValueError):
        equilibria.verify_thm2_inequality(2.0, 1.0, [LinearGenerator([[0.5, 0.2], [0.0, 0.5]], [0.0, 0.0])])


def test_w1_gap_bound_inequality():
    grid = equilibria.generator_grid(np.linspace(1, 2, 6), np.linspace(-1, 1, 5), FLOOR)
    rep = equilibria.verify_thm3_inequality(0.5, grid)
    assert rep.passed, [c.to_dict() for c in rep.failures()]
    assert rep.points[0]["eta"] > 0


def test_w1_gap_bound_minimizer_has_zero_gap():
    rep = equilibria.verify_thm3_inequality(0.5, [LinearGenerator([[1.0]], [0.0], FLOOR)])
    assert rep.points[1]["value_gap"] == pytest.approx(0.0, abs=1e-12)


def test_w1_gap_bound_uninformative():
    # a generator whose map fixes a sample point makes alpha^2 vanish
    x = games.Game("wgan_1d", 0.5).data.sample(2000, np.random.default_rng(0))[0, 0]
    u = x - 2.0 * x / 0.5
    rep = equilibria.verify_thm3_inequality(0.5, [LinearGenerator([[2.0]], [u], FLOOR)])
    assert rep.verdict == "uninformative"
    with pytest.raises(ValueError):
        equilibria.verify_thm3_inequality(0.5, [LinearGenerator([[0.5]], [0.0], BALL)])
    with pytest.raises(ValueError):
        equilibria.verify_thm3_inequality(1.5, [])
