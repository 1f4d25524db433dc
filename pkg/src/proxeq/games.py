"""Analytic minimax games between a linear generator and a discriminator family.

Three games share one interface:

- ``w2_lq``: quadratic-cost Wasserstein GAN with quadratic discriminators,
  V = E D(X) - E D^c(G(Z)), everything in closed form;
- ``wgan_1d``: 1-Lipschitz WGAN on the line with piecewise-linear
  discriminators, exact through Gaussian partial expectations;
- ``fgan_gauss``: f-GAN with log-ratio discriminators, by fixed Gauss-Legendre
  grids (data side over x, generator side over the latent z, so generator
  gradients are exact derivatives of the same sum).

Data is N(0, sigma^2 I) and the latent is N(0, I).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import oracles
from .discriminators import (
    C_CONCAVE_MARGIN,
    LogRatioDiscriminator,
    PiecewiseLinearDiscriminator,
    QuadraticDiscriminator,
    c_concave_margin,
    project_c_concave,
    project_lipschitz,
    sym_to_vec,
    vec_to_sym,
    n_sym,
)
from .fdivergence import FDivergenceSpec
from .gauss_core import (
    ConvergenceError,
    DomainError,
    Gaussian,
    LinearGenerator,
    SpectralConstraint,
    gaussian_pushforward,
    matrix_sqrt_psd,
    sym,
)
from .reports import Report, at_most
from .sobolev import closed_form_semi_norm_sq_quadratic

KINDS = ("w2_lq", "wgan_1d", "fgan_gauss")
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Game:
    kind: str
    sigma: float
    dim: int = 1
    eta: float = 1.0
    fspec: FDivergenceSpec | None = None
    lipschitz: float = 1.0
    convention: str = "hessian"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown game kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "wgan_1d" and self.dim != 1:
            raise ValueError("wgan_1d is one-dimensional")
        if self.kind == "fgan_gauss" and self.fspec is None:
            raise ValueError("fgan_gauss needs an f-divergence spec")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def data(self) -> Gaussian:
        return Gaussian.isotropic(self.sigma, self.dim)

    @property
    def latent(self) -> Gaussian:
        return Gaussian.standard(self.dim)

    def generator(self, w, u, constraint: SpectralConstraint | None = None) -> LinearGenerator:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if constraint is None:
            return LinearGenerator(w, u)
        return LinearGenerator(w, u, constraint)

    def pushforward(self, g: LinearGenerator) -> Gaussian:
        return gaussian_pushforward(g, self.latent)


# -- shared helpers ----------------------------------------------------------


def _check(game: Game, d) -> None:
    expected = {
        "w2_lq": QuadraticDiscriminator,
        "wgan_1d": PiecewiseLinearDiscriminator,
        "fgan_gauss": LogRatioDiscriminator,
    }[game.kind]
    if not isinstance(d, expected):
        raise TypeError(f"{game.kind} needs a {expected.__name__}, got {type(d).__name__}")
    if d.dim != game.dim:
        raise ValueError(f"discriminator dim {d.dim} != game dim {game.dim}")


def disc_feasible(game: Game, d, tol: float = 1e-9) -> bool:
    _check(game, d)
    if game.kind == "w2_lq":
        return c_concave_margin(d, game.eta, game.convention) >= -tol
    if game.kind == "wgan_1d":
        return d.lipschitz_constant() <= game.lipschitz + tol
    return True


def project_disc(game: Game, d):
    if game.kind == "w2_lq":
        return project_c_concave(d, game.eta, game.convention)
    if game.kind == "wgan_1d":
        return project_lipschitz(d, game.lipschitz)
    return d


def project_disc_params(game: Game, d, p: np.ndarray) -> np.ndarray:
    return project_disc(game, d.with_params(p)).params()


def zero_disc(game: Game):
    """The constant discriminator the realizable saddle uses (0, or f'(1))."""
    if game.kind == "w2_lq":
        return QuadraticDiscriminator.zero(game.dim)
    if game.kind == "wgan_1d":
        return PiecewiseLinearDiscriminator([0.0], [0.0], 0.0, 0.0)
    return LogRatioDiscriminator.constant(game.fspec, game.dim)


# -- w2_lq -------------------------------------------------------------------


def _w2_parts(game: Game, d: QuadraticDiscriminator):
    if c_concave_margin(d, game.eta, "hessian") < 0.5 * C_CONCAVE_MARGIN:
        raise DomainError(
            f"discriminator is not strictly c-concave (margin {c_concave_margin(d, game.eta):.3e}); V is +inf"
        )
    return oracles.c_transform_quadratic(d, game.eta)


def _quad_mean(d: QuadraticDiscriminator, mean: np.ndarray, cov: np.ndarray) -> float:
    return float(np.trace(d.A @ cov) + mean @ d.A @ mean + d.b @ mean + d.c)


def _w2_value(game, g, d):
    dc = _w2_parts(game, d)
    y = game.pushforward(g)
    x = game.data
    return _quad_mean(d, x.mean, x.cov) - _quad_mean(dc, y.mean, y.cov)


def _w2_grad_gen(game, g, d):
    dc = _w2_parts(game, d)
    return -2 * dc.A @ g.w, -(2 * dc.A @ g.u + dc.b)


def _w2_moments(game, g, d):
    m = game.eta * np.eye(game.dim) - 2 * d.A
    minv = np.linalg.inv(m)
    y = game.pushforward(g)
    mp = minv @ (d.b + game.eta * y.mean)
    s2 = sym(game.eta**2 * minv @ y.cov @ minv + np.outer(mp, mp))
    return minv, mp, s2


def _w2_grad_disc(game, g, d):
    _w2_parts(game, d)
    _, mp, s2 = _w2_moments(game, g, d)
    x = game.data
    ga = x.second_moment() - s2
    gb = x.mean - mp
    return np.concatenate([sym_to_vec(ga), gb])


def _w2_hess_disc(game, g, d):
    """Exact Hessian of V in (A, b) coordinates."""
    _w2_parts(game, d)
    minv, mp, s2 = _w2_moments(game, g, d)
    k = n_sym(game.dim)
    n = k + game.dim
    h = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        da, db = vec_to_sym(e[:k], game.dim), e[k:]
        t = minv @ (2 * da @ s2 + np.outer(db, mp))
        dga = -(t + t.T)
        dgb = -minv @ (2 * da @ mp + db)
        h[:, j] = np.concatenate([sym_to_vec(dga), dgb])
    return sym(h)


def _w2_best_response(game, g):
    y = game.pushforward(g)
    s = matrix_sqrt_psd(y.cov)
    if np.linalg.eigvalsh(s)[0] <= 1e-12:
        raise DomainError("generator covariance is rank-deficient; the best response is not strictly c-concave")
    a = 0.5 * game.eta * (np.eye(game.dim) - s / game.sigma)
    return QuadraticDiscriminator(sym(a), -game.eta * y.mean, 0.0)


# -- wgan_1d -----------------------------------------------------------------


def _emax(a: np.ndarray, mean: float, sd: float) -> np.ndarray:
    """E[max(Y, a)] for Y ~ N(mean, sd^2)."""
    if sd == 0:
        return np.maximum(mean, a)
    al = (a - mean) / sd
    return a + sd * (np.exp(-0.5 * al**2) / np.sqrt(2 * np.pi) - al * special.ndtr(-al))


def segment_expectations(knots: np.ndarray, mean: float, sd: float) -> np.ndarray:
    """E[c_j(Y)] for the K+1 slope basis functions of a knot vector.

    c_0 = min(x, k_0) - k_0, c_j = clip(x, k_{j-1}, k_j) - k_{j-1},
    c_K = max(x, k_{K-1}) - k_{K-1}; D = D(k_0) + sum_j s_j c_j.
    """
    m = _emax(knots, mean, sd)
    inner = m[:-1] - m[1:] + np.diff(knots)
    return np.concatenate([[mean - m[0]], inner, [m[-1] - knots[-1]]])


def _segment_probs(knots, mean, sd):
    if sd == 0:
        cdf = (knots <= mean).astype(float)
    else:
        cdf = special.ndtr((knots - mean) / sd)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def _segment_pdf_diffs(knots, mean, sd):
    # phi(alpha_{j-1}) - phi(alpha_j), with phi = 0 at the infinite ends
    if sd == 0:
        return np.zeros(knots.size + 1)
    phi = np.exp(-0.5 * ((knots - mean) / sd) ** 2) / np.sqrt(2 * np.pi)
    p = np.concatenate([[0.0], phi, [0.0]])
    return p[:-1] - p[1:]


def _wgan_gen_law(g):
    return float(g.u[0]), float(abs(g.w[0, 0])), float(np.sign(g.w[0, 0]))


def _wgan_coeffs(game, g, knots):
    u, s, _ = _wgan_gen_law(g)
    return segment_expectations(knots, 0.0, game.sigma) - segment_expectations(knots, u, s)


def _wgan_value(game, g, d):
    return float(d.slopes() @ _wgan_coeffs(game, g, d.knots))


def _wgan_grad_gen(game, g, d):
    u, s, sign = _wgan_gen_law(g)
    slopes = d.slopes()
    du = slopes @ _segment_probs(d.knots, u, s)
    dw = sign * (slopes @ _segment_pdf_diffs(d.knots, u, s))
    return -np.array([[dw]]), -np.array([du])


def _ascend_slopes(coef: np.ndarray, L: float, s0: np.ndarray, tol: float = 1e-8, max_iter: int = 400):
    """Projected ascent on the linear objective s . coef over the box |s| <= L."""
    scale = float(np.max(np.abs(coef)))
    if scale == 0:
        return np.clip(s0, -L, L), 0.0
    s = np.clip(s0, -L, L)
    t = 1.0 / scale
    resid = np.inf
    for _ in range(max_iter):
        s = np.clip(s + t * coef, -L, L)
        resid = float(np.linalg.norm(np.clip(s + t * coef, -L, L) - s) / t)
        if resid <= tol:
            return s, resid
        t *= 2.0
    raise ConvergenceError("wgan_1d bridge ascent did not converge", resid)


def _wgan_best_response(game, g, n_knots: int = 65, refine_tol: float = 1e-6, max_knots: int = (1 << 14) + 1):
    u, s, _ = _wgan_gen_law(g)
    try:
        lo, hi = oracles.wgan1d_density_crossings(game.sigma, s, u)
    except DomainError:
        half = max(game.sigma, s)
        lo, hi = u - half, u + half
    L = game.lipschitz
    prev, n = None, n_knots
    while True:
        knots = np.linspace(lo, hi, n)
        coef = _wgan_coeffs(game, g, knots)
        slopes, _ = _ascend_slopes(coef, L, np.zeros(n + 1))
        val = float(slopes @ coef)
        if prev is not None and abs(val - prev) < refine_tol:
            break
        if n >= max_knots:
            raise ConvergenceError("wgan_1d bridge refinement did not settle", abs(val - prev))
        prev, n = val, 2 * n - 1
    return PiecewiseLinearDiscriminator.from_slopes(knots, slopes).anchored(0.0)


# -- fgan_gauss --------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _gl_grid(sd: float, dim: int, half_width: float = 10.0):
    """Tensor Gauss-Legendre nodes on [-h sd, h sd]^dim for N(0, sd^2 I).

    Returns nodes, weights with the density folded in, and their logs (the
    weights underflow in wide windows; the logs do not).
    """
    panel = 0.25 if dim == 1 else max(1.0, 2 * half_width / 40)
    panels = int(np.ceil(2 * half_width / panel))
    edges = np.linspace(-half_width, half_width, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    z = (mid[:, None] + h[:, None] * _GL_X).ravel()
    logw = np.log((h[:, None] * _GL_W).ravel()) - 0.5 * z**2 - 0.5 * np.log(2 * np.pi)
    if dim == 1:
        zs, lw = z[:, None], logw
    else:
        zs = np.array(list(itertools.product(z, repeat=dim)))
        lw = np.sum(np.array(list(itertools.product(logw, repeat=dim))), axis=1)
    return sd * zs, np.exp(lw), lw


def _latent_half_width(game, g) -> float:
    # the generator-side integrand f*(D) can carry data mass into the latent
    # tails (for KL it is q * p/q = p), so the latent window must cover the
    # preimage of the data window, not just +/-10 latent sd
    smin = np.linalg.svd(g.w, compute_uv=False).min()
    if smin <= 0:
        return 400.0
    need = (10 * game.sigma + np.max(np.abs(g.u))) / smin
    return float(min(400.0, max(10.0, 5 * np.ceil(need / 5))))


def _fgan_grids(game, g):
    x, wx, _ = _gl_grid(float(game.sigma), game.dim)
    z, wz, lwz = _gl_grid(1.0, game.dim, _latent_half_width(game, g))
    return x, wx, z @ g.w.T + g.u, wz, lwz, z


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} overflowed on the quadrature grid")
    return a


def _gen_side(spec, l, w, logw, slope=False):
    """Weights times f*(D) (or its slope in l), in log space where e^l is large."""
    big = l > 0
    out = np.empty_like(l)
    with np.errstate(over="ignore", under="ignore"):
        if slope:
            out[~big] = w[~big] * spec.t2f2_at_exp(l[~big])
            out[big] = np.exp(logw[big] + l[big]) * spec.tf2_at_exp(l[big])
        else:
            out[~big] = w[~big] * spec.conj_fprime_at_exp(l[~big])
            out[big] = np.exp(logw[big] + l[big]) * spec.conj_over_t_at_exp(l[big])
    return _finite(out, "generator-side integrand")


def _fgan_value(game, g, d):
    x, wx, y, wy, lwy, _ = _fgan_grids(game, g)
    ex = wx @ _finite(d.spec.fprime_at_exp(d.exponent(x)), "D(x)")
    ey = np.sum(_gen_side(d.spec, d.exponent(y), wy, lwy))
    return float(ex - ey)


def _fgan_grad_gen(game, g, d):
    _, _, y, wy, lwy, z = _fgan_grids(game, g)
    # grad_y f*(D(y)) = e^{2l} f''(e^l) grad l(y)
    hw = _gen_side(d.spec, d.exponent(y), wy, lwy, slope=True)[:, None] * (y @ d.P + d.q)
    return -hw.T @ z, -hw.sum(axis=0)


def _fgan_grad_disc(game, g, d):
    x, wx, y, wy, lwy, _ = _fgan_grids(game, g)
    fx, fy = d.exponent_features(x), d.exponent_features(y)
    ax = wx * d.spec.tf2_at_exp(d.exponent(x))
    ay = _gen_side(d.spec, d.exponent(y), wy, lwy, slope=True)
    return ax @ fx - ay @ fy


def _fgan_best_response(game, g):
    return oracles.optimal_f_discriminator(game.fspec, game.data, game.pushforward(g))


# -- public interface --------------------------------------------------------


def value(game: Game, g: LinearGenerator, d) -> float:
    _check(game, d)
    if game.kind == "w2_lq":
        return _w2_value(game, g, d)
    if game.kind == "wgan_1d":
        return _wgan_value(game, g, d)
    return _fgan_value(game, g, d)


def grad_generator(game: Game, g: LinearGenerator, d) -> tuple[np.ndarray, np.ndarray]:
    """(dV/dW, dV/du)."""
    _check(game, d)
    if game.kind == "w2_lq":
        return _w2_grad_gen(game, g, d)
    if game.kind == "wgan_1d":
        return _wgan_grad_gen(game, g, d)
    return _fgan_grad_gen(game, g, d)


def grad_generator_flat(game: Game, g: LinearGenerator, d) -> np.ndarray:
    dw, du = grad_generator(game, g, d)
    return np.concatenate([np.ravel(dw), du])


def grad_discriminator(game: Game, g: LinearGenerator, d) -> np.ndarray:
    """dV/d params(d), in the coordinates of ``d.params()``."""
    _check(game, d)
    if game.kind == "w2_lq":
        return _w2_grad_disc(game, g, d)
    if game.kind == "wgan_1d":
        return _wgan_coeffs(game, g, d.knots)
    return _fgan_grad_disc(game, g, d)


def hess_discriminator(game: Game, g: LinearGenerator, d, h: float = 1e-5) -> np.ndarray:
    """Hessian of V in discriminator parameters (exact for w2_lq and wgan_1d)."""
    _check(game, d)
    if game.kind == "w2_lq":
        return _w2_hess_disc(game, g, d)
    if game.kind == "wgan_1d":
        return np.zeros((d.n_params, d.n_params))
    p = d.params()
    cols = []
    for k in range(p.size):
        e = np.zeros(p.size)
        e[k] = h
        cols.append((grad_discriminator(game, g, d.with_params(p + e)) - grad_discriminator(game, g, d.with_params(p - e))) / (2 * h))
    return sym(np.array(cols).T)


def hess_u(game: Game, g: LinearGenerator, d, h: float = 1e-5) -> np.ndarray:
    """Hessian of V in the generator offset u (exact for w2_lq: -2 A_c)."""
    _check(game, d)
    if game.kind == "w2_lq":
        return -2 * _w2_parts(game, d).A
    cols = []
    for k in range(game.dim):
        e = np.zeros(game.dim)
        e[k] = h
        cols.append((grad_generator(game, g.replace(u=g.u + e), d)[1] - grad_generator(game, g.replace(u=g.u - e), d)[1]) / (2 * h))
    return sym(np.array(cols).T)


def best_response_disc(game: Game, g: LinearGenerator):
    if game.kind == "w2_lq":
        return _w2_best_response(game, g)
    if game.kind == "wgan_1d":
        return _wgan_best_response(game, g)
    return _fgan_best_response(game, g)


def primal_value(game: Game, g: LinearGenerator) -> float:
    """The distance the game's inner maximum equals, from the matching oracle."""
    y = game.pushforward(g)
    if game.kind == "w2_lq":
        return oracles.w2_gaussian(game.data, y, game.eta)
    if game.kind == "wgan_1d":
        return oracles.w1_1d(game.data, y)
    # the variational value of V is the divergence with the densities swapped
    return oracles.f_divergence_quadrature(game.fspec, y, game.data)


def dual_equals_primal_check(game: Game, g: LinearGenerator) -> Report:
    rep = Report(f"dual_equals_primal[{game.kind}]")
    d = best_response_disc(game, g)
    dual = value(game, g, d)
    primal = primal_value(game, g)
    tol = 1e-3 if game.kind == "wgan_1d" else 1e-5
    rep.add(at_most("|dual - oracle|", abs(dual - primal), 0.0, tol))
    if game.kind == "w2_lq":
        sob = closed_form_semi_norm_sq_quadratic(game.data, d) / (2 * game.eta)
        rep.add(at_most("|dual - |grad D|^2 / 2eta|", abs(dual - sob), 0.0, tol))
    rep.points.append({"w": g.w.tolist(), "u": g.u.tolist(), "dual": dual, "oracle": primal})
    rep.notes.append("best-response constant anchored so that D(0) = 0")
    return rep
