"""Proximal objective V_prox(G, D) = max_D' V(G, D') - (lam/2) |D' - D|^2.

The inner problem is solved by projected gradient ascent over discriminator
parameters, warm-started at D. For the quadratic and piecewise-linear
families x-gradients are linear in the parameters, so the penalty is the
quadratic (lam/2) sum_i w_i |J_i p - grad D(x_i)|^2 with J_i fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import games
from .discriminators import LogRatioDiscriminator
from .gauss_core import ConvergenceError
from .reports import Report, at_least, at_most
from .sobolev import SobolevMetric

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProximalConfig:
    lam: float
    inner_max_iters: int = 20000
    inner_tol: float = 1e-8
    inner_step: float | str = "auto"
    fixed_steps: int | None = None  # run exactly this many steps of size inner_step

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.fixed_steps is not None and not isinstance(self.inner_step, (int, float)):
            raise ValueError("fixed-step mode needs a numeric inner_step")

    def with_lam(self, lam: float) -> "ProximalConfig":
        return ProximalConfig(lam, self.inner_max_iters, self.inner_tol, self.inner_step, self.fixed_steps)


@dataclass
class ProxResult:
    value: float
    d_tilde: object
    residual: float
    iterations: int
    converged: bool


@dataclass
class StrongConcavityCertificate:
    eta1: float
    eta2: float
    margin: float
    lam: float
    concave: bool = False  # V was concave in the parameters at every probe
    explanation: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def modulus(self) -> float:
        """A valid strong-concavity modulus of the inner objective (0 if none is known)."""
        if self.concave:
            return max(self.margin, 0.5 * self.lam * self.eta1)
        return max(self.margin, 0.0)

    @property
    def valid(self) -> bool:
        return self.margin > 0 or (self.concave and self.lam * self.eta1 > 0)


class CertificateRefused(RuntimeError):
    pass


class _Inner:
    """The inner objective in parameter coordinates."""

    def __init__(self, game, g, d, m: SobolevMetric, lam: float):
        if isinstance(d, LogRatioDiscriminator):
            raise ValueError("the proximal objective supports quadratic and piecewise-linear discriminators")
        self.game, self.g, self.template, self.lam = game, g, d, lam
        pts = m.samples.points
        self.w = m.samples.weights
        self.J = d.grad_jacobian(pts)
        target = d.grad(pts)
        self.target = target.reshape(pts.shape[0], -1)

    def disc(self, p):
        return self.template.with_params(p)

    def penalty_parts(self, p):
        r = np.einsum("nik,k->ni", self.J, p) - self.target
        return r

    def value(self, p) -> float:
        r = self.penalty_parts(p)
        pen = 0.5 * self.lam * float(np.sum(self.w * np.sum(r * r, axis=1)))
        return games.value(self.game, self.g, self.disc(p)) - pen

    def grad(self, p) -> np.ndarray:
        r = self.penalty_parts(p)
        return games.grad_discriminator(self.game, self.g, self.disc(p)) - self.lam * np.einsum(
            "n,nik,ni->k", self.w, self.J, r
        )

    def project(self, p) -> np.ndarray:
        return games.project_disc_params(self.game, self.template, p)


def _mapping_norm(inner: _Inner, p, gp, t) -> float:
    return float(np.linalg.norm(inner.project(p + t * gp) - p) / t)


def solve_inner(game, g, d, m: SobolevMetric, cfg: ProximalConfig, init=None) -> ProxResult:
    """Maximize the inner objective centred at ``d``, starting from ``init`` (default ``d``)."""
    inner = _Inner(game, g, games.project_disc(game, d), m, cfg.lam)
    p = inner.template.params() if init is None else inner.project(init.params())
    f = inner.value(p)
    gp = inner.grad(p)

    if cfg.fixed_steps is not None:
        t = float(cfg.inner_step)
        for _ in range(cfg.fixed_steps):
            p = inner.project(p + t * gp)
            gp = inner.grad(p)
        res = _mapping_norm(inner, p, gp, t)
        return ProxResult(inner.value(p), _anchor(inner.disc(p)), res, cfg.fixed_steps, res <= cfg.inner_tol)

    if cfg.inner_step == "auto":
        curv = cfg.lam * np.linalg.eigvalsh(np.einsum("n,nik,nil->kl", inner.w, inner.J, inner.J))[-1]
        t = 1.0 / max(curv, 1.0)
    else:
        t = float(cfg.inner_step)
    res = _mapping_norm(inner, p, gp, t)
    it = 0
    while res > cfg.inner_tol:
        if it >= cfg.inner_max_iters:
            raise ConvergenceError(f"proximal inner solve hit {cfg.inner_max_iters} iterations", res)
        it += 1
        # backtrack on a local curvature test along the step; it only uses
        # gradients, which stay accurate when value differences hit rounding
        for _ in range(60):
            try:
                q = inner.project(p + t * gp)
                gq = inner.grad(q)
                fq = inner.value(q)
            except (ValueError, np.linalg.LinAlgError):
                t *= 0.5
                continue
            s = q - p
            ss = float(s @ s)
            curv = -float((gq - gp) @ s)
            if ss == 0 or (curv <= ss / t * (1 + 1e-9) and fq >= f - 1e-12 * (1 + abs(f))):
                break
            t *= 0.5
        else:
            raise ConvergenceError("proximal inner line search failed", res)
        if ss == 0:
            res = _mapping_norm(inner, q, gq, t)
            p, gp, f = q, gq, fq
            if res > cfg.inner_tol:
                t *= 2.0
            continue
        p, gp, f = q, gq, fq
        # Barzilai-Borwein trial step for the next iteration
        t = ss / curv if curv > 0 else 2.0 * t
        t = float(np.clip(t, 1e-12, 1e12))
        res = _mapping_norm(inner, p, gp, t)
    log.debug("inner solve: %d iterations, residual %.3e", it, res)
    return ProxResult(inner.value(p), _anchor(inner.disc(p)), res, it, True)


def _anchor(d):
    return d.anchored(0.0) if hasattr(d, "anchored") else d


def prox_value(game, g, d, m: SobolevMetric, cfg: ProximalConfig, init=None) -> tuple[float, object]:
    """(V_prox(g, d), maximizing D')."""
    if cfg.lam == 0:
        dt = games.best_response_disc(game, g)
        return games.value(game, g, dt), dt
    r = solve_inner(game, g, d, m, cfg, init)
    return r.value, r.d_tilde


def strong_concavity_certificate(
    game, g, d, m: SobolevMetric, lam: float, probes=(), n_random: int = 8, seed: int = 0
) -> StrongConcavityCertificate:
    """eta1 from the metric's Gram matrix, eta2 from Hessians of V at probe points."""
    if isinstance(d, LogRatioDiscriminator):
        raise ValueError("certificates cover quadratic and piecewise-linear discriminators")
    gram = m.gram(d)
    ev = np.linalg.eigvalsh(gram)
    eta1 = 2 * float(ev[0])
    if game.kind == "wgan_1d":
        eta2, concave = 0.0, True
    else:
        # probe d, the supplied points, the segments between them, and a small
        # ball around d; far probes pushed onto the constraint boundary would
        # report curvature the inner iterates never see
        rng = np.random.default_rng(seed)
        p0 = d.params()
        pts = [d, *probes]
        for q in probes:
            for a in (0.25, 0.5, 0.75):
                pts.append(d.with_params((1 - a) * p0 + a * q.params()))
        radius = 0.05 * (1.0 + float(np.linalg.norm(p0)))
        for _ in range(n_random):
            step = rng.standard_normal(p0.size)
            step *= radius * rng.uniform() / np.linalg.norm(step)
            pts.append(games.project_disc(game, d.with_params(p0 + step)))
        eta2, top = 0.0, -np.inf
        for q in pts:
            h = games.hess_discriminator(game, g, q)
            e = np.linalg.eigvalsh(h)
            eta2 = max(eta2, float(np.max(np.abs(e))))
            top = max(top, float(e[-1]))
        concave = top <= 1e-12 * max(1.0, eta2)
    if eta1 <= 1e-12 * max(1.0, float(ev[-1])):
        return StrongConcavityCertificate(
            0.0, eta2, -np.inf, lam, concave,
            f"metric is degenerate on the parameters (Gram eigenvalues {ev[0]:.2e} .. {ev[-1]:.2e})",
        )
    margin = 0.5 * lam * eta1 - eta2
    text = "certified" if margin > 0 else "lam * eta1 / 2 <= eta2"
    if margin <= 0 and concave:
        text += "; V is concave in the parameters at all probes, so lam * eta1 / 2 is still a modulus"
    return StrongConcavityCertificate(eta1, eta2, margin, lam, concave, text)


def prox_grad_generator(
    game, g, d, m: SobolevMetric, cfg: ProximalConfig, waive_certificate: bool = False, info: dict | None = None, init=None
):
    """Danskin gradient: grad_generator at the inner maximizer."""
    cert = None
    val, dt = prox_value(game, g, d, m, cfg, init)
    if cfg.lam > 0:
        cert = strong_concavity_certificate(game, g, d, m, cfg.lam, probes=(dt,))
        if not cert.valid and not waive_certificate:
            raise CertificateRefused(f"inner problem not certified strongly concave: {cert.explanation}")
    if info is not None:
        info.update(value=val, d_tilde=dt, certificate=cert, waived=bool(cert is not None and not cert.valid))
    return games.grad_generator(game, g, dt)


def danskin_check(
    game, g, d, m: SobolevMetric, cfg: ProximalConfig, h: float = 1e-5, rel_tol: float = 1e-4,
    n_perturb: int = 100, radius: float = 0.5, seed: int = 0,
) -> Report:
    """Danskin gradient against central differences of V_prox, and the strong-concavity gap

        Phi(D~) - Phi(p) >= (mu / 2) |p - D~|^2

    of the inner objective Phi at feasible perturbations p of the maximizer.
    """
    rep = Report(f"prop4_danskin[{game.kind}, lam={cfg.lam:g}]")
    info: dict = {}
    grad = np.concatenate([np.ravel(a) for a in prox_grad_generator(game, g, d, m, cfg, info=info)])
    cert, dt = info["certificate"], info["d_tilde"]
    rep.add(at_least("certified modulus", cert.modulus, 0.0, 0.0))
    th = g.params()
    fd = np.empty_like(th)
    for k in range(th.size):
        e = np.zeros(th.size)
        e[k] = h
        vp = prox_value(game, g.from_params(th + e), d, m, cfg, init=dt)[0]
        vm = prox_value(game, g.from_params(th - e), d, m, cfg, init=dt)[0]
        fd[k] = (vp - vm) / (2 * h)
    err = float(np.linalg.norm(fd - grad) / max(1.0, np.linalg.norm(grad)))
    rep.add(at_most("relative |Danskin - finite difference|", err, 0.0, rel_tol))

    inner = _Inner(game, g, games.project_disc(game, d), m, cfg.lam)
    p_star = dt.params()
    f_star = inner.value(p_star)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_perturb):
        step = rng.standard_normal(p_star.size)
        step *= radius * rng.uniform() / np.linalg.norm(step)
        p = inner.project(p_star + step)
        gap = f_star - inner.value(p) - 0.5 * cert.modulus * float(np.sum((p - p_star) ** 2))
        worst = min(worst, gap)
    # the maximizer is only known to inner_tol, so allow that much slack
    rep.add(at_least("min strong-concavity gap", worst, 0.0, 10 * cfg.inner_tol))
    rep.points.append(
        {"w": g.w.tolist(), "u": g.u.tolist(), "grad": grad.tolist(), "fd": fd.tolist(),
         "eta1": cert.eta1, "eta2": cert.eta2, "modulus": cert.modulus}
    )
    return rep
