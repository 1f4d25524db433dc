"""Training loops (simultaneous GDA, alternating, proximal) and the
frozen-discriminator probes.

Every step is followed by projection onto the player's feasible set.
Runs are deterministic: the only randomness is the metric's sample set,
drawn once from ``seed``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import games
from .gauss_core import ConvergenceError, DomainError, LinearGenerator
from .proximal import ProximalConfig, prox_grad_generator, prox_value
from .sobolev import SampleSet, SobolevMetric

log = logging.getLogger(__name__)

DIVERGENCE = 1e12
MAX_BACKTRACK = 40
GEN_PROJECTED, DISC_PROJECTED, TERMINATED = 1, 2, 4


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "gda"
    gen_step: float | dict = 1e-2
    disc_step: float = 1e-2
    n_disc_per_gen: int = 5
    prox: ProximalConfig | None = None
    max_iters: int = 100
    seed: int = 0
    metric_samples: int | None = None  # None: Gauss-Hermite grid of the data
    stop_tol: float | None = None  # stop once both projected-gradient mappings are this small

    def __post_init__(self):
        if self.algorithm not in ("gda", "alternating", "proximal"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "proximal" and self.prox is None:
            raise ValueError("proximal training needs a ProximalConfig")
        if not self.disc_step > 0 or self.max_iters < 0 or self.n_disc_per_gen < 1:
            raise ValueError("steps must be positive and the budget nonnegative")
        step_schedule(self.gen_step, 0)


def step_schedule(spec, k: int) -> float:
    """A constant, or {"kind": "constant" | "inverse_time" | "inverse_sqrt" | "backtracking", "value", "decay"}.

    For "backtracking" this is the trial step; ``decay`` is the shrink factor.
    """
    if isinstance(spec, (int, float)):
        if not spec > 0:
            raise ValueError("generator step must be positive")
        return float(spec)
    kind, v, c = spec.get("kind", "constant"), float(spec["value"]), float(spec.get("decay", 1.0))
    if not v > 0:
        raise ValueError("generator step must be positive")
    if kind == "constant":
        return v
    if kind == "inverse_time":
        return v / (1 + c * k)
    if kind == "inverse_sqrt":
        return v / np.sqrt(1 + c * k)
    if kind == "backtracking":
        if not 0 < float(spec.get("decay", 0.5)) < 1:
            raise ValueError("backtracking needs a shrink factor in (0, 1)")
        return v
    raise ValueError(f"unknown step schedule {kind!r}")


@dataclass
class Record:
    iteration: int
    gen_params: np.ndarray
    disc_params: np.ndarray
    V: float
    V_prox: float
    grad_gen_norm: float
    grad_disc_norm: float
    flags: int = 0


@dataclass
class Trajectory:
    records: list[Record] = field(default_factory=list)
    terminated: str | None = None

    def __len__(self):
        return len(self.records)

    def values(self) -> np.ndarray:
        return np.array([r.V for r in self.records])

    def prox_values(self) -> np.ndarray:
        return np.array([r.V_prox for r in self.records])

    @property
    def final(self) -> Record:
        return self.records[-1]


def default_metric(game, cfg: TrainConfig) -> SobolevMetric:
    if cfg.metric_samples is None:
        return SobolevMetric(SampleSet.gauss_hermite(game.data, 8 if game.dim <= 2 else 4))
    return SobolevMetric(SampleSet.from_data(game.data, cfg.metric_samples, cfg.seed))


def _project_gen(g: LinearGenerator) -> tuple[LinearGenerator, bool]:
    p = g.projected()
    return p, not np.array_equal(p.w, g.w)


def _gen_step(g, grad, gamma):
    dw, du = grad
    return _project_gen(g.replace(w=g.w - gamma * np.asarray(dw), u=g.u - gamma * np.asarray(du)))


def _disc_step(game, d, grad, step):
    raw = d.with_params(d.params() + step * grad)
    proj = games.project_disc(game, raw)
    return proj, proj is not raw


def _gen_step_search(game, g, d, grad, gamma, shrink):
    """Projected step with backtracking until V(., d) satisfies the descent-lemma bound."""
    v0 = games.value(game, g, d)
    flat = np.concatenate([np.ravel(grad[0]), grad[1]])
    for _ in range(MAX_BACKTRACK):
        gp, pg = _gen_step(g, grad, gamma)
        step = gp.params() - g.params()
        try:
            v1 = games.value(game, gp, d)
        except DomainError:
            v1 = np.inf
        if v1 <= v0 + flat @ step + step @ step / (2 * gamma):
            break
        gamma *= shrink
    return gp, pg


def stationarity(game, g: LinearGenerator, d, gg=None, gd=None) -> tuple[float, float]:
    """Unit-step projected-gradient mapping norms for the generator and discriminator."""
    gg = games.grad_generator(game, g, d) if gg is None else gg
    gd = games.grad_discriminator(game, g, d) if gd is None else gd
    gp, _ = _gen_step(g, gg, 1.0)
    rg = float(np.linalg.norm(g.params() - gp.params()))
    p = d.params()
    rd = float(np.linalg.norm(games.project_disc_params(game, d, p + gd) - p))
    return rg, rd


def _diverged(v: float) -> bool:
    return not np.isfinite(v) or abs(v) > DIVERGENCE


def train(game, cfg: TrainConfig, init_g: LinearGenerator, init_d, metric: SobolevMetric | None = None) -> Trajectory:
    if not init_g.feasible():
        raise DomainError("initial generator violates its constraint")
    if not games.disc_feasible(game, init_d):
        raise DomainError("initial discriminator is infeasible")
    if cfg.algorithm == "proximal" and metric is None:
        metric = default_metric(game, cfg)
    traj = Trajectory()
    g, d = init_g, init_d
    flags = 0
    d_tilde = None
    for k in range(cfg.max_iters + 1):
        try:
            v = games.value(game, g, d)
            gg = games.grad_generator(game, g, d)
            gd = games.grad_discriminator(game, g, d)
            vp = np.nan
            if cfg.algorithm == "proximal":
                vp, d_tilde = prox_value(game, g, d, metric, cfg.prox, init=d_tilde)
        except (DomainError, ConvergenceError, np.linalg.LinAlgError) as exc:
            traj.terminated = f"numerical failure at iteration {k}: {exc}"
            if traj.records:
                traj.records[-1].flags |= TERMINATED
            break
        rec = Record(
            k, g.params(), d.params(), v, vp,
            float(np.linalg.norm(np.concatenate([np.ravel(gg[0]), gg[1]]))), float(np.linalg.norm(gd)), flags,
        )
        traj.records.append(rec)
        if _diverged(v):
            rec.flags |= TERMINATED
            traj.terminated = f"divergence at iteration {k}: |V| = {abs(v):.3e}"
            break
        if k == cfg.max_iters:
            break
        if cfg.stop_tol is not None and max(stationarity(game, g, d, gg, gd)) <= cfg.stop_tol:
            traj.terminated = f"stationary at iteration {k}"
            break
        gamma = step_schedule(cfg.gen_step, k)
        if isinstance(cfg.gen_step, dict) and cfg.gen_step.get("kind") == "backtracking":
            shrink = float(cfg.gen_step.get("decay", 0.5))

            def gen_update(g, grad, d):
                return _gen_step_search(game, g, d, grad, gamma, shrink)
        else:

            def gen_update(g, grad, d):
                return _gen_step(g, grad, gamma)

        flags = 0
        if cfg.algorithm == "gda":
            g, pg = gen_update(g, gg, d)
            d, pd = _disc_step(game, d, gd, cfg.disc_step)
        elif cfg.algorithm == "alternating":
            pd = False
            for j in range(cfg.n_disc_per_gen):
                grad = gd if j == 0 else games.grad_discriminator(game, g, d)
                d, hit = _disc_step(game, d, grad, cfg.disc_step)
                pd |= hit
            g, pg = gen_update(g, games.grad_generator(game, g, d), d)
        else:
            # proximal step: w <- inner maximizer of the proximal objective, then a
            # generator step on V at the new discriminator
            d, pd = d_tilde, False
            g, pg = gen_update(g, games.grad_generator(game, g, d), d)
        flags = (GEN_PROJECTED if pg else 0) | (DISC_PROJECTED if pd else 0)
    return traj


def freeze_disc_probe(game, g: LinearGenerator, d_frozen, steps: int, gamma: float) -> Trajectory:
    """Gradient descent on the generator against a fixed discriminator."""
    traj = Trajectory()
    flags = 0
    for k in range(steps + 1):
        v = games.value(game, g, d_frozen)
        grad = games.grad_generator(game, g, d_frozen)
        traj.records.append(
            Record(k, g.params(), d_frozen.params(), v, np.nan,
                   float(np.linalg.norm(np.concatenate([np.ravel(grad[0]), grad[1]]))), 0.0, flags)
        )
        if _diverged(v):
            traj.records[-1].flags |= TERMINATED
            traj.terminated = f"divergence at iteration {k}"
            break
        if k == steps:
            break
        g, pg = _gen_step(g, grad, gamma)
        flags = GEN_PROJECTED if pg else 0
    return traj


def freeze_disc_proximal_probe(
    game, g: LinearGenerator, d_frozen, m: SobolevMetric, prox_cfg: ProximalConfig, steps: int, gamma: float
) -> Trajectory:
    """Gradient descent on the generator against V_prox(., d_frozen)."""
    traj = Trajectory()
    flags = 0
    d_tilde = None
    for k in range(steps + 1):
        info: dict = {}
        grad = prox_grad_generator(game, g, d_frozen, m, prox_cfg, waive_certificate=True, info=info, init=d_tilde)
        d_tilde = info["d_tilde"]
        v = games.value(game, g, d_frozen)
        traj.records.append(
            Record(k, g.params(), d_frozen.params(), v, info["value"],
                   float(np.linalg.norm(np.concatenate([np.ravel(grad[0]), grad[1]]))), 0.0, flags)
        )
        if _diverged(info["value"]):
            traj.records[-1].flags |= TERMINATED
            traj.terminated = f"divergence at iteration {k}"
            break
        if k == steps:
            break
        g, pg = _gen_step(g, grad, gamma)
        flags = GEN_PROJECTED if pg else 0
    return traj
