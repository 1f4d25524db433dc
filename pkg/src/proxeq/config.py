"""Experiment configs: JSON schema validation, hashing, and object builders."""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import equilibria, games
from .discriminators import LogRatioDiscriminator, PiecewiseLinearDiscriminator, QuadraticDiscriminator
from .fdivergence import get_spec
from .gauss_core import LinearGenerator, SpectralConstraint
from .sobolev import SampleSet, SobolevMetric

GAME_DEFAULTS = {"kind": "w2_lq", "sigma": 2.0, "dim": 1, "eta": 1.0, "lipschitz": 1.0, "convention": "hessian"}


class ConfigError(ValueError):
    """Schema or semantic problem with a config; ``diagnostics`` lists {path, message}."""

    def __init__(self, message: str, diagnostics: list[dict] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or [{"path": "", "message": message}]


def schema() -> dict:
    return json.loads(resources.files("proxeq").joinpath("config.schema.json").read_text())


def validate(cfg: dict) -> None:
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(cfg), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        diags = [{"path": ".".join(str(p) for p in e.absolute_path) or "<root>", "message": e.message} for e in errors]
        raise ConfigError(f"{len(diags)} schema violation(s)", diags)


def bundled_names() -> list[str]:
    root = resources.files("proxeq").joinpath("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve(path_or_name: str) -> Path | None:
    """A file path, or the name of a bundled config."""
    p = Path(path_or_name)
    if p.is_file():
        return p
    res = resources.files("proxeq").joinpath("configs", f"{path_or_name}.json")
    return Path(str(res)) if res.is_file() else None


def load(path_or_name: str) -> dict:
    p = resolve(path_or_name)
    if p is None:
        raise ConfigError(f"no config file or bundled config named {path_or_name!r}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", [{"path": f"line {exc.lineno}", "message": exc.msg}]) from None
    validate(cfg)
    return cfg


def override_seeds(cfg: dict, seed: int) -> dict:
    out = copy.deepcopy(cfg)

    def walk(node):
        if isinstance(node, dict):
            for k in node:
                if k == "seed":
                    node[k] = seed
                else:
                    walk(node[k])
        elif isinstance(node, list):
            for x in node:
                walk(x)

    walk(out)
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# -- builders ----------------------------------------------------------------


def values(spec) -> np.ndarray:
    if isinstance(spec, dict):
        a, b, n = spec["linspace"]
        return np.linspace(a, b, n)
    return np.asarray(spec, dtype=float)


def build_game(base: dict, override: dict | None = None) -> games.Game:
    g = {**GAME_DEFAULTS, **base, **(override or {})}
    if g["kind"] == "fgan_gauss" and "f" not in g:
        raise ConfigError("fgan_gauss needs game.f", [{"path": "game.f", "message": "required for fgan_gauss"}])
    fspec = get_spec(g["f"]) if g["kind"] == "fgan_gauss" else None
    return games.Game(g["kind"], float(g["sigma"]), int(g["dim"]), float(g["eta"]), fspec, float(g["lipschitz"]), g["convention"])


def build_constraint(spec: dict | None) -> SpectralConstraint:
    if spec is None:
        return equilibria.BALL
    return SpectralConstraint(spec["kind"], float(spec["bound"]))


def build_generator(game: games.Game, spec) -> LinearGenerator:
    if spec == "minimizer":
        if game.kind != "w2_lq":
            raise ConfigError("'minimizer' is defined for w2_lq games only")
        return equilibria.w2_minimizer(game.sigma, game.dim)
    w = np.asarray(spec["w"], dtype=float)
    u = np.asarray(spec["u"], dtype=float)
    if w.ndim == 0:
        w = w * np.eye(game.dim)
    if u.ndim == 0:
        u = np.full(game.dim, float(u))
    g = LinearGenerator(w, u, build_constraint(spec.get("constraint")))
    if g.out_dim != game.dim:
        raise ConfigError(f"generator output dim {g.out_dim} != game dim {game.dim}")
    return g


def build_discriminator(game: games.Game, spec, g: LinearGenerator | None = None):
    if spec == "best_response":
        if g is None:
            raise ConfigError("'best_response' needs a generator")
        return games.best_response_disc(game, g)
    if spec == "zero":
        return games.zero_disc(game)
    fam = spec["family"]
    if fam == "quadratic":
        a = np.asarray(spec["A"], dtype=float)
        b = np.asarray(spec["b"], dtype=float)
        a = a * np.eye(game.dim) if a.ndim == 0 else a
        b = np.full(game.dim, float(b)) if b.ndim == 0 else b
        return QuadraticDiscriminator(a, b, float(spec.get("c", 0.0)))
    if fam == "piecewise_linear":
        return PiecewiseLinearDiscriminator(spec["knots"], spec["values"], spec["left_slope"], spec["right_slope"])
    return PiecewiseLinearDiscriminator.abs_like(spec["center"], spec["scale"])


def build_gen_grid(game: games.Game, spec: dict) -> list[LinearGenerator]:
    c = build_constraint(spec.get("constraint"))
    fam = spec["family"]
    if fam == "lattice":
        if game.dim != 1:
            raise ConfigError("lattice generator grids are one-dimensional; use 'psd' or 'rotated'")
        return equilibria.generator_grid(values(spec["w"]), values(spec["u"]), c)
    if fam == "psd":
        return equilibria.psd_generator_grid(values(spec["w"]), values(spec["u"]), spec.get("dim", game.dim), c)
    return equilibria.generator_grid_2d(
        values(spec["scales"]), values(spec["angles"]), [np.asarray(o, dtype=float) for o in spec["offsets"]], c
    )


def build_disc_grid(game: games.Game, spec: dict) -> list:
    fam = spec["family"]
    if fam == "quadratic":
        return [
            QuadraticDiscriminator(a * np.eye(game.dim), np.full(game.dim, b))
            for a, b in itertools.product(values(spec["A"]), values(spec["b"]))
        ]
    if fam == "piecewise_linear":
        knots = np.asarray(spec["knots"], dtype=float)
        return [
            PiecewiseLinearDiscriminator.from_slopes(knots, s)
            for s in itertools.product(values(spec["slopes"]), repeat=knots.size + 1)
        ]
    if game.fspec is None:
        raise ConfigError("log_ratio grids need an fgan_gauss game")
    return [
        LogRatioDiscriminator(p * np.eye(game.dim), np.full(game.dim, q), r, game.fspec)
        for p, q, r in itertools.product(values(spec["P"]), values(spec["q"]), values(spec["r"]))
    ]


def build_metric(game: games.Game, spec: dict | None, seed: int) -> SobolevMetric:
    spec = spec or {"source": "grid"}
    if spec["source"] == "grid":
        return SobolevMetric(SampleSet.gauss_hermite(game.data, spec.get("order", 8)))
    return SobolevMetric(SampleSet.from_data(game.data, spec["n"], spec.get("seed", seed)))
