"""Small dense linear algebra and Gaussian primitives.

Everything here works on plain numpy arrays of modest size (d <= 16). The
Gaussian and generator types are frozen dataclasses; operations never mutate
their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

PSD_TOL = 1e-10
SYM_TOL = 1e-12

ConstraintKind = Literal["max_singular_value_at_most", "min_singular_value_at_least"]


class DomainError(ValueError):
    """Raised when an input lies outside the mathematical domain of an operation."""


class DegenerateGaussianError(DomainError):
    pass


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of budget; ``residual`` is its last stationarity measure."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _as_matrix(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _as_vector(v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _check_symmetric(m: np.ndarray, tol: float = SYM_TOL) -> None:
    if m.shape[0] != m.shape[1]:
        raise DomainError(f"matrix is not square: {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > tol * scale:
        raise DomainError(f"matrix is not symmetric (max |m - m^T| = {asym:.3e})")


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def eigh_psd(m, tol: float = PSD_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric PSD matrix with tiny negatives clamped."""
    m = _as_matrix(m)
    _check_symmetric(m)
    vals, vecs = np.linalg.eigh(sym(m))
    if vals[0] < -tol:
        raise DomainError(f"matrix is indefinite: eigenvalue {vals[0]:.6e} < -{tol:g}")
    return np.clip(vals, 0.0, None), vecs


def matrix_sqrt_psd(m) -> np.ndarray:
    """Symmetric PSD square root S with S @ S == m."""
    vals, vecs = eigh_psd(m)
    s = (vecs * np.sqrt(vals)) @ vecs.T
    return sym(s)


def pinv_sqrt_psd(m, rcond: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of the PSD square root."""
    vals, vecs = eigh_psd(m)
    root = np.sqrt(vals)
    keep = root > rcond * max(1.0, root.max(initial=0.0))
    inv = np.zeros_like(root)
    inv[keep] = 1.0 / root[keep]
    return sym((vecs * inv) @ vecs.T)


@dataclass(frozen=True)
class SpectralConstraint:
    kind: ConstraintKind
    bound: float

    def __post_init__(self):
        if self.kind not in ("max_singular_value_at_most", "min_singular_value_at_least"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if not self.bound > 0:
            raise ValueError("spectral bound must be positive")

    def margin(self, w) -> float:
        """Signed distance of the binding singular value to the bound (>= 0 means feasible)."""
        s = np.linalg.svd(_as_matrix(w), compute_uv=False)
        if self.kind == "max_singular_value_at_most":
            return float(self.bound - s.max())
        return float(s.min() - self.bound)

    def satisfied(self, w, tol: float = 1e-9) -> bool:
        return self.margin(w) >= -tol

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bound": self.bound}


def project_spectral(w, c: SpectralConstraint) -> np.ndarray:
    """Frobenius-nearest matrix satisfying ``c``, by clipping singular values."""
    w = _as_matrix(w)
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    if c.kind == "max_singular_value_at_most":
        if s.max() <= c.bound:
            return w.copy()
        s = np.minimum(s, c.bound)
    else:
        if s.min() >= c.bound:
            return w.copy()
        s = np.maximum(s, c.bound)
    return (u * s) @ vt


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal N(mean, cov) with a symmetric PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean)
        cov = _as_matrix(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        _check_symmetric(cov)
        eigmin = float(np.linalg.eigvalsh(sym(cov))[0])
        if eigmin < -PSD_TOL:
            raise DomainError(f"covariance is indefinite: eigenvalue {eigmin:.6e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", sym(cov))

    @classmethod
    def isotropic(cls, sigma: float, dim: int, mean=None) -> "Gaussian":
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean, sigma**2 * np.eye(dim))

    @classmethod
    def standard(cls, dim: int) -> "Gaussian":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    def eigmin(self) -> float:
        return float(np.linalg.eigvalsh(self.cov)[0])

    def sqrt_cov(self) -> np.ndarray:
        return matrix_sqrt_psd(self.cov)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self.sqrt_cov().T

    def second_moment(self) -> np.ndarray:
        return self.cov + np.outer(self.mean, self.mean)

    def __eq__(self, other):
        if not isinstance(other, Gaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True, eq=False)
class LinearGenerator:
    """G(z) = W z + u with a spectral constraint on W."""

    w: np.ndarray
    u: np.ndarray
    constraint: SpectralConstraint = field(
        default_factory=lambda: SpectralConstraint("max_singular_value_at_most", 1.0)
    )

    def __post_init__(self):
        w = _as_matrix(self.w)
        u = _as_vector(self.u)
        if w.shape[0] != u.size:
            raise ValueError(f"W has {w.shape[0]} rows but u has size {u.size}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.w.shape[1]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return z @ self.w.T + self.u

    def feasible(self, tol: float = 1e-9) -> bool:
        return self.constraint.satisfied(self.w, tol)

    def projected(self) -> "LinearGenerator":
        return LinearGenerator(project_spectral(self.w, self.constraint), self.u, self.constraint)

    def replace(self, w=None, u=None) -> "LinearGenerator":
        return LinearGenerator(self.w if w is None else w, self.u if u is None else u, self.constraint)

    def params(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.u])

    def from_params(self, theta: np.ndarray) -> "LinearGenerator":
        k = self.w.size
        return LinearGenerator(theta[:k].reshape(self.w.shape), theta[k:], self.constraint)

    def __repr__(self):
        return f"LinearGenerator(w={self.w.tolist()}, u={self.u.tolist()}, {self.constraint.kind}<{self.constraint.bound}>)"


def gaussian_pushforward(g: LinearGenerator, latent: Gaussian) -> Gaussian:
    """Law of W Z + u for Z ~ latent."""
    if g.latent_dim != latent.dim:
        raise ValueError(f"generator expects latent dim {g.latent_dim}, got {latent.dim}")
    return Gaussian(g.u + g.w @ latent.mean, sym(g.w @ latent.cov @ g.w.T))


def log_density(g: Gaussian, x) -> np.ndarray | float:
    """Exact log-density; ``x`` may be one point (d,) or a batch (n, d)."""
    vals, vecs = np.linalg.eigh(g.cov)
    if vals[0] <= PSD_TOL:
        raise DegenerateGaussianError(
            f"degenerate Gaussian: covariance eigenvalue {vals[0]:.3e} <= {PSD_TOL:g}"
        )
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and x.size == g.dim)
    xs = x.reshape(-1, g.dim) if x.ndim < 2 else x
    if xs.shape[-1] != g.dim:
        raise ValueError(f"point dimension {xs.shape[-1]} does not match Gaussian dim {g.dim}")
    r = (xs - g.mean) @ vecs
    maha = np.sum(r**2 / vals, axis=1)
    out = -0.5 * (g.dim * np.log(2 * np.pi) + np.sum(np.log(vals)) + maha)
    return float(out[0]) if single else out
