"""Agreement between the game values and the independent oracles on random pairs.

Each suite draws seeded random (data, generator) pairs and compares the
game's dual value at its best response with the matching primal oracle:

- ``w2``: closed-form dual against the Gaussian W2 formula (tol 1e-5);
- ``wgan``: the 1-D bridge dual against W1 by CDF quadrature (tol 1e-3);
- ``fgan``: the variational value at the optimal log-ratio discriminator
  against the f-divergence by density quadrature (tol 1e-6), and the game's
  own grid value against the same oracle.

``perturb`` adds a relative error to every dual value; it exists only to
exercise the failure path.
"""

from __future__ import annotations

import numpy as np

from . import games, oracles
from .fdivergence import get_spec
from .gauss_core import LinearGenerator
from .reports import Report, at_most

SUITES = ("w2", "wgan", "fgan")
TOL = {"w2": 1e-5, "wgan": 1e-3, "fgan": 1e-6}


def _random_w(rng, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    u, _, vt = np.linalg.svd(a)
    s = rng.uniform(0.2, 1.0, dim)
    return (u * s) @ vt


def _w2_pair(rng, i, perturb):
    dim = 1 + i % 2
    game = games.Game("w2_lq", float(rng.uniform(0.5, 3.0)), dim, float(rng.choice([0.5, 1.0, 2.0])))
    g = LinearGenerator(_random_w(rng, dim), rng.standard_normal(dim))
    dual = games.value(game, g, games.best_response_disc(game, g)) * (1 + perturb)
    return game, g, {"dual": dual, "oracle": oracles.w2_gaussian(game.data, game.pushforward(g), game.eta)}


def _wgan_pair(rng, i, perturb):
    game = games.Game("wgan_1d", float(rng.uniform(0.3, 3.0)))
    g = LinearGenerator([[rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])]], [rng.standard_normal()])
    dual = games.value(game, g, games.best_response_disc(game, g)) * (1 + perturb)
    return game, g, {"dual": dual, "oracle": oracles.w1_1d(game.data, game.pushforward(g))}


def _fgan_pair(rng, i, perturb):
    spec = get_spec(("jsd", "kl")[i % 2])
    game = games.Game("fgan_gauss", float(rng.uniform(0.5, 2.0)), fspec=spec)
    g = LinearGenerator([[rng.uniform(0.3, 1.0)]], [rng.uniform(-1.0, 1.0)])
    data, push = game.data, game.pushforward(g)
    d = oracles.optimal_f_discriminator(spec, data, push)
    out = {
        "dual": oracles.variational_f_value(spec, data, push, d) * (1 + perturb),
        "oracle": oracles.f_divergence_quadrature(spec, push, data),
        "game": games.value(game, g, games.best_response_disc(game, g)) * (1 + perturb),
        "f": spec.name,
    }
    return game, g, out


_PAIR = {"w2": _w2_pair, "wgan": _wgan_pair, "fgan": _fgan_pair}


def oracle_matrix(suites=SUITES, n_pairs: int = 50, seed: int = 0, perturb: float = 0.0) -> Report:
    rep = Report("oracle_crosscheck")
    for name in suites:
        if name not in _PAIR:
            raise ValueError(f"unknown crosscheck suite {name!r}")
        rng = np.random.default_rng([seed, SUITES.index(name)])
        worst, worst_game = 0.0, 0.0
        for i in range(n_pairs):
            game, g, r = _PAIR[name](rng, i, perturb)
            worst = max(worst, abs(r["dual"] - r["oracle"]))
            if "game" in r:
                worst_game = max(worst_game, abs(r["game"] - r["oracle"]))
            rep.points.append({"suite": name, "sigma": game.sigma, "w": g.w.tolist(), "u": g.u.tolist(), **r})
        if n_pairs:
            rep.add(at_most(f"{name}: max |dual - oracle|", worst, 0.0, TOL[name]))
            if name == "fgan":
                rep.add(at_most("fgan: max |game value - oracle|", worst_game, 0.0, TOL[name]))
    return rep
