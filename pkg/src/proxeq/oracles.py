"""Independent ground-truth computations.

Closed forms (Gaussian optimal transport, Brenier maps, c-transforms of
quadratics) and brute-force quadrature (W1 as a CDF integral, f-divergences as
density integrals). The game module never calls the quadrature oracles for its
own values, so agreement between the two is a real cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .discriminators import (
    C_CONCAVE_MARGIN,
    LogRatioDiscriminator,
    QuadraticDiscriminator,
    c_concave_margin,
)
from .fdivergence import FDivergenceSpec
from .gauss_core import DomainError, Gaussian, log_density, matrix_sqrt_psd, sym

GL_NODES = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


class QuadratureError(DomainError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    lo: float
    hi: float
    n_points: int = 4096
    rule: str = "gauss_legendre"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("quadrature window needs lo < hi")
        if self.n_points < 16:
            raise ValueError("quadrature needs at least 16 points")
        if self.rule not in ("trapezoid", "gauss_legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        if self.rule == "trapezoid":
            x = np.linspace(self.lo, self.hi, self.n_points)
            w = np.full(self.n_points, x[1] - x[0])
            w[[0, -1]] *= 0.5
            return x, w
        # composite rule, 16 nodes per panel
        panels = -(-self.n_points // GL_NODES)
        edges = np.linspace(self.lo, self.hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * _GL_X).ravel()
        w = (half[:, None] * _GL_W).ravel()
        return x, w


def window_for(*gaussians: Gaussian, k: float = 10.0, axis: int = 0) -> tuple[float, float]:
    """Union of mean +/- k sd windows along one coordinate."""
    lo = min(g.mean[axis] - k * np.sqrt(g.cov[axis, axis]) for g in gaussians)
    hi = max(g.mean[axis] + k * np.sqrt(g.cov[axis, axis]) for g in gaussians)
    return float(lo), float(hi)


def auto_quadrature(*gaussians: Gaussian, k: float = 10.0, axis: int = 0, max_points: int = 1 << 15) -> QuadratureSpec:
    """Gauss-Legendre panels no wider than half the smallest standard deviation."""
    lo, hi = window_for(*gaussians, k=k, axis=axis)
    sd = min(np.sqrt(g.cov[axis, axis]) for g in gaussians if g.cov[axis, axis] > 0)
    panels = int(np.ceil((hi - lo) / (0.5 * sd)))
    n = int(min(max(panels * GL_NODES, 256), max_points))
    return QuadratureSpec(lo, hi, n, "gauss_legendre")


# -- optimal transport -------------------------------------------------------


def w2_gaussian(p: Gaussian, q: Gaussian, eta: float = 1.0) -> float:
    """Optimal transport cost between Gaussians for c(x, y) = (eta/2)|x - y|^2."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    rq = matrix_sqrt_psd(q.cov)
    cross = matrix_sqrt_psd(sym(rq @ p.cov @ rq))
    bures = np.trace(p.cov) + np.trace(q.cov) - 2 * np.trace(cross)
    return float(0.5 * eta * (np.sum((p.mean - q.mean) ** 2) + max(bures, 0.0)))


@dataclass(frozen=True, eq=False)
class LinearMap:
    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T + self.offset

    def pushforward(self, g: Gaussian) -> Gaussian:
        return Gaussian(self.matrix @ g.mean + self.offset, sym(self.matrix @ g.cov @ self.matrix.T))


def brenier_map_gaussian(sigma: float, w, u) -> LinearMap:
    """Optimal map from N(0, sigma^2 I) onto N(u, W W^T)."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return LinearMap(matrix_sqrt_psd(sym(w @ w.T)) / sigma, np.atleast_1d(np.asarray(u, dtype=float)))


def w2_monte_carlo(sigma: float, w, u, eta: float = 1.0, n: int = 1_000_000, seed: int = 0) -> float:
    """Transport cost of the Brenier coupling estimated by sampling."""
    t = brenier_map_gaussian(sigma, w, u)
    rng = np.random.default_rng(seed)
    x = sigma * rng.standard_normal((n, t.offset.size))
    return float(0.5 * eta * np.mean(np.sum((x - t(x)) ** 2, axis=1)))


def _check_1d(*gs: Gaussian) -> None:
    for g in gs:
        if g.dim != 1:
            raise ValueError("one-dimensional Gaussians required")


def _cdf(g: Gaussian, x: np.ndarray) -> np.ndarray:
    s = np.sqrt(g.cov[0, 0])
    if s == 0:
        return (x >= g.mean[0]).astype(float)
    return special.ndtr((x - g.mean[0]) / s)


def w1_1d(p: Gaussian, q: Gaussian, quad: QuadratureSpec | None = None) -> float:
    """W1 between 1-D Gaussians as the integral of |F_p - F_q|."""
    _check_1d(p, q)
    quad = auto_quadrature(p, q) if quad is None else quad
    outside = sum(
        _cdf(g, np.array([quad.lo]))[0] + 1 - _cdf(g, np.array([quad.hi]))[0] for g in (p, q)
    )
    if outside > 1e-10:
        raise QuadratureError(f"window [{quad.lo:g}, {quad.hi:g}] leaves tail mass {outside:.2e} > 1e-10")
    # |F_p - F_q| has a kink where the CDFs cross; split the window there so
    # no panel straddles it
    parts = [quad]
    sp, sq = np.sqrt(p.cov[0, 0]), np.sqrt(q.cov[0, 0])
    if sp != sq:
        c = (q.mean[0] * sp - p.mean[0] * sq) / (sp - sq)
        if quad.lo < c < quad.hi:
            frac = (c - quad.lo) / (quad.hi - quad.lo)
            n_left = max(GL_NODES, int(round(frac * quad.n_points)))
            n_right = max(GL_NODES, quad.n_points - n_left)
            parts = [QuadratureSpec(quad.lo, c, n_left, quad.rule), QuadratureSpec(c, quad.hi, n_right, quad.rule)]
    total = 0.0
    for part in parts:
        x, w = part.nodes_weights()
        total += float(np.sum(w * np.abs(_cdf(p, x) - _cdf(q, x))))
    return total


def w1_1d_closed_form(p: Gaussian, q: Gaussian) -> float:
    """E|(s_p - s_q) Z + (m_p - m_q)| via the quantile coupling."""
    _check_1d(p, q)
    a = abs(np.sqrt(p.cov[0, 0]) - np.sqrt(q.cov[0, 0]))
    b = p.mean[0] - q.mean[0]
    if a == 0:
        return float(abs(b))
    return float(a * np.sqrt(2 / np.pi) * np.exp(-0.5 * (b / a) ** 2) + b * (1 - 2 * special.ndtr(-b / a)))


# -- f-divergences -----------------------------------------------------------


def _product_grid(p: Gaussian, q: Gaussian, quad: QuadratureSpec | None, max_total: int = 400_000):
    d = p.dim
    per_axis = []
    cap = int(max_total ** (1.0 / d))
    for axis in range(d):
        qa = quad if quad is not None else auto_quadrature(p, q, axis=axis, max_points=max(cap, 256) if d > 1 else 1 << 15)
        per_axis.append(qa.nodes_weights())
    if d == 1:
        return per_axis[0][0][:, None], per_axis[0][1]
    xs = np.array(list(itertools.product(*[a[0] for a in per_axis])))
    ws = np.prod(np.array(list(itertools.product(*[a[1] for a in per_axis]))), axis=1)
    return xs, ws


def f_divergence_quadrature(spec: FDivergenceSpec, p: Gaussian, q: Gaussian, quad: QuadratureSpec | None = None) -> float:
    """Integral of p f(q / p) by tensor-product quadrature.

    The integrand is evaluated as q f^(p / q) (reverse generator) wherever
    q / p > 1, which keeps both branches bounded by the smaller density.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.eigmin() <= 0 or q.eigmin() <= 0:
        raise DomainError("densities must be strictly positive")
    x, w = _product_grid(p, q, quad)
    lp, lq = log_density(p, x), log_density(q, x)
    l = lq - lp
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        fwd = np.exp(lp) * spec.f(np.exp(np.minimum(l, 0.0)))
        rev = np.exp(lq) * spec.reverse_at_negexp(np.maximum(l, 0.0))
    vals = np.where(l <= 0, fwd, rev)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise QuadratureError(f"integrand overflow at x = {x[np.argmax(bad)].tolist()}")
    return float(np.sum(w * vals))


def optimal_f_discriminator(spec: FDivergenceSpec, p: Gaussian, q: Gaussian) -> LogRatioDiscriminator:
    """D*(x) = f'(p(x) / q(x)) with the exact quadratic log-ratio."""
    if p.eigmin() <= 0 or q.eigmin() <= 0:
        raise DomainError("optimal f-discriminator needs strictly positive definite covariances")
    ip, iq = np.linalg.inv(p.cov), np.linalg.inv(q.cov)
    P = sym(iq - ip)
    qv = ip @ p.mean - iq @ q.mean
    _, ldp = np.linalg.slogdet(p.cov)
    _, ldq = np.linalg.slogdet(q.cov)
    r = 0.5 * (q.mean @ iq @ q.mean - p.mean @ ip @ p.mean) + 0.5 * (ldq - ldp)
    return LogRatioDiscriminator(P, qv, r, spec)


def variational_f_value(spec: FDivergenceSpec, p: Gaussian, q: Gaussian, d: LogRatioDiscriminator, quad=None) -> float:
    """E_p[D] - E_q[f*(D)] by direct quadrature over a shared grid."""
    x, w = _product_grid(p, q, quad)
    l = d.exponent(x)
    lp, lq = log_density(p, x), log_density(q, x)
    with np.errstate(over="ignore", invalid="ignore"):
        # q f*(D) = q e^l (f*(D) / e^l) where the ratio is large
        qconj = np.where(
            l <= 0,
            np.exp(lq) * spec.conj_fprime_at_exp(np.minimum(l, 0.0)),
            np.exp(lq + l) * spec.conj_over_t_at_exp(np.maximum(l, 0.0)),
        )
        vals = np.exp(lp) * spec.fprime_at_exp(l) - qconj
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("variational integrand overflow")
    return float(np.sum(w * vals))


# -- c-transforms ------------------------------------------------------------


def c_transform_quadratic(d: QuadraticDiscriminator, eta: float = 1.0) -> QuadraticDiscriminator:
    """D^c(y) = sup_x D(x) - (eta/2)|x - y|^2 in closed form.

    With M = eta I - 2A > 0 the maximizer is x = M^{-1}(b + eta y).
    """
    margin = c_concave_margin(d, eta)
    # projected iterates sit on the margin up to round-off
    if margin < 0.5 * C_CONCAVE_MARGIN:
        vals = np.linalg.eigvalsh(d.A)
        raise DomainError(
            f"not strictly c-concave: eigenvalue {vals[-1]:.6g} of A exceeds eta/2 = {eta / 2:g} (margin {margin:.3e})"
        )
    minv = np.linalg.inv(eta * np.eye(d.dim) - 2 * d.A)
    a_c = sym(0.5 * eta**2 * minv - 0.5 * eta * np.eye(d.dim))
    b_c = eta * minv @ d.b
    c_c = d.c + 0.5 * d.b @ minv @ d.b
    return QuadraticDiscriminator(a_c, b_c, c_c)


def inverse_c_transform_quadratic(h: QuadraticDiscriminator, eta: float = 1.0) -> QuadraticDiscriminator:
    """x -> inf_y h(y) + (eta/2)|x - y|^2, which undoes ``c_transform_quadratic``.

    Finite when eta I + 2A_h > 0.
    """
    n = eta * np.eye(h.dim) + 2 * h.A
    if np.linalg.eigvalsh(n)[0] < C_CONCAVE_MARGIN:
        raise DomainError("inf-convolution is unbounded below for this quadratic")
    ninv = np.linalg.inv(n)
    a = sym(0.5 * eta * np.eye(h.dim) - 0.5 * eta**2 * ninv)
    b = eta * ninv @ h.b
    c = h.c - 0.5 * h.b @ ninv @ h.b
    return QuadraticDiscriminator(a, b, c)


def c_transform_grid(d, y: np.ndarray, eta: float = 1.0, lo: float = -20.0, hi: float = 20.0, n: int = 200_001) -> np.ndarray:
    """Brute-force 1-D supremum over a grid, refined by a bounded scalar solve."""
    grid = np.linspace(lo, hi, n)
    dv = d.value(grid[:, None]) if d.dim == 1 else None
    out = np.empty(len(y))
    for i, yi in enumerate(np.asarray(y, dtype=float)):
        obj = dv - 0.5 * eta * (grid - yi) ** 2
        j = int(np.argmax(obj))
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, n - 1)]
        res = optimize.minimize_scalar(
            lambda t: -(d.value(np.array([[t]]))[0] - 0.5 * eta * (t - yi) ** 2), bounds=(a, b), method="bounded",
            options={"xatol": 1e-12},
        )
        out[i] = max(obj[j], -res.fun)
    return out


# -- 1-D density crossings ---------------------------------------------------


def _log_density_gap(sigma: float, w: float, u: float):
    # log p_X(x) - log p_Y(x) for X ~ N(0, sigma^2), Y ~ N(u, w^2)
    return lambda x: np.log(abs(w) / sigma) - 0.5 * (x / sigma) ** 2 + 0.5 * ((x - u) / w) ** 2


def wgan1d_density_crossings(sigma: float, w: float, u: float) -> tuple[float, float]:
    """The two points where N(0, sigma^2) and N(u, w^2) have equal density.

    Works for any |w| != sigma, w != 0; the gap is a quadratic whose vertex
    lies between the roots, so each root is bracketed by walking outward.
    """
    if not sigma > 0 or w == 0 or abs(w) == sigma:
        raise DomainError(f"densities do not cross twice for sigma={sigma}, w={w}")
    h = _log_density_gap(sigma, w, u)
    curv = 1 / w**2 - 1 / sigma**2
    vertex = (u / w**2) / curv
    hv = h(vertex)
    if hv * curv >= 0:
        raise DomainError("log-density gap has no sign change")
    roots = []
    for direction in (-1.0, 1.0):
        step = max(abs(w), sigma)
        far = vertex + direction * step
        while h(far) * hv > 0:
            step *= 2
            far = vertex + direction * step
            if step > 1e12:
                raise DomainError("no sign change found while bracketing a density crossing")
        lo, hi = sorted((vertex, far))
        roots.append(optimize.brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
    a1, a2 = sorted(roots)
    return float(a1), float(a2)


def printed_crossing_roots(sigma: float, w: float, u: float) -> tuple[float, float]:
    """Roots of the quadratic with log(sigma/|w|) in the constant term (no factor 2)."""
    a = 1 / w**2 - 1 / sigma**2
    b = -2 * u / w**2
    c = u**2 / w**2 - np.log(sigma / abs(w))
    disc = b * b - 4 * a * c
    r = np.sort((-b + np.array([-1.0, 1.0]) * np.sqrt(disc)) / (2 * a))
    return float(r[0]), float(r[1])
