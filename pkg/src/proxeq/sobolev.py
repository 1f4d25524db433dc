"""Sobolev semi-norm E_P |grad D(X)|^2 over a frozen sample set.

A sample set is either drawn from the data (equal weights 1/n) or a
Gauss-Hermite grid with probability weights. The grid integrates polynomials
of degree <= 2*order - 1 exactly, so for quadratic discriminators it reproduces
the closed form to rounding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from .discriminators import PiecewiseLinearDiscriminator, QuadraticDiscriminator
from .gauss_core import Gaussian, _as_vector


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray
    weights: np.ndarray | None = None
    source: str = "drawn_from_data"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ValueError("sample set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample points must be finite")
        if self.source not in ("drawn_from_data", "grid"):
            raise ValueError(f"unknown sample source {self.source!r}")
        w = np.full(pts.shape[0], 1.0 / pts.shape[0]) if self.weights is None else _as_vector(self.weights)
        if w.size != pts.shape[0] or np.any(w < 0):
            raise ValueError("weights must be nonnegative, one per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def from_data(cls, data: Gaussian, n: int, seed: int) -> "SampleSet":
        return cls(data.sample(n, np.random.default_rng(seed)), None, "drawn_from_data")

    @classmethod
    def gauss_hermite(cls, data: Gaussian, order: int = 8) -> "SampleSet":
        """Tensor Gauss-Hermite nodes mapped through the data's mean and covariance root."""
        z, w = special.roots_hermitenorm(order)
        w = w / w.sum()
        zs = np.array(list(itertools.product(z, repeat=data.dim)))
        ws = np.prod(np.array(list(itertools.product(w, repeat=data.dim))), axis=1)
        return cls(data.mean + zs @ data.sqrt_cov().T, ws, "grid")


@dataclass(frozen=True, eq=False)
class SobolevMetric:
    samples: SampleSet

    def grads(self, d) -> tuple[np.ndarray, np.ndarray]:
        """Gradients at the sample points (n, dim) and the kink mask."""
        pts = self.samples.points
        if isinstance(d, PiecewiseLinearDiscriminator):
            return d.grad(pts), d.at_knot(pts[:, 0])
        return d.grad(pts), np.zeros(self.samples.n, dtype=bool)

    def semi_inner(self, d1, d2) -> float:
        g1, _ = self.grads(d1)
        g2, _ = self.grads(d2)
        return float(np.sum(self.samples.weights * np.sum(g1 * g2, axis=1)))

    def semi_norm_sq(self, d) -> float:
        g, _ = self.grads(d)
        return float(np.sum(self.samples.weights * np.sum(g * g, axis=1)))

    def distance_sq(self, d1, d2) -> float:
        """|d1 - d2|^2 from gradient differences, valid across families."""
        g1, _ = self.grads(d1)
        g2, _ = self.grads(d2)
        return float(np.sum(self.samples.weights * np.sum((g1 - g2) ** 2, axis=1)))

    def kinks(self, d) -> int:
        return int(np.sum(self.grads(d)[1]))

    def gram(self, d) -> np.ndarray:
        """G = sum_i w_i J_i^T J_i with J_i = d grad D(x_i) / d params (linear families)."""
        j = d.grad_jacobian(self.samples.points)
        return np.einsum("n,nik,nil->kl", self.samples.weights, j, j)


def semi_inner(m: SobolevMetric, d1, d2) -> float:
    return m.semi_inner(d1, d2)


def semi_norm_sq(m: SobolevMetric, d) -> float:
    return m.semi_norm_sq(d)


def closed_form_semi_norm_sq_quadratic(data: Gaussian, d: QuadraticDiscriminator) -> float:
    """E|2AX + b|^2 = 4 tr(A Sigma A) + |2A mu + b|^2."""
    a = d.A
    return float(4 * np.trace(a @ data.cov @ a) + np.sum((2 * a @ data.mean + d.b) ** 2))


def closed_form_semi_norm_sq_piecewise(data: Gaussian, d: PiecewiseLinearDiscriminator) -> float:
    """Sum of squared slopes weighted by the data mass of each segment."""
    s = np.sqrt(data.cov[0, 0])
    cdf = special.ndtr((d.knots - data.mean[0]) / s)
    mass = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
    return float(np.sum(mass * d.slopes() ** 2))
