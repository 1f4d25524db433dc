"""Discriminator families: quadratic, 1-D piecewise-linear, and Gaussian log-ratio.

Each family exposes a flat parameter vector (``params`` / ``with_params``) so
that the games, proximal and equilibria modules can treat them uniformly.
Symmetric matrices are flattened in an orthonormal basis (diagonal entries,
then sqrt(2) times the strict upper triangle), so Euclidean geometry in
parameter space equals Frobenius geometry on the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .fdivergence import FDivergenceSpec
from .gauss_core import DomainError, _as_matrix, _as_vector, _check_symmetric, sym

C_CONCAVE_MARGIN = 1e-8
SQRT2 = np.sqrt(2.0)


def sym_to_vec(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    iu = np.triu_indices(a.shape[0], 1)
    return np.concatenate([np.diag(a), SQRT2 * a[iu]])


def vec_to_sym(v: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a = np.diag(v[:d]).astype(float)
    iu = np.triu_indices(d, 1)
    a[iu] = v[d:] / SQRT2
    a[(iu[1], iu[0])] = v[d:] / SQRT2
    return a


def sym_basis(d: int) -> np.ndarray:
    """Orthonormal basis of symmetric d x d matrices, shape (d(d+1)/2, d, d)."""
    n = d * (d + 1) // 2
    return np.stack([vec_to_sym(np.eye(n)[k], d) for k in range(n)])


def n_sym(d: int) -> int:
    return d * (d + 1) // 2


def _points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and (dim > 1 or x.size == 1))
    if single:
        xs = x.reshape(1, dim)
    elif x.ndim == 1:
        xs = x.reshape(-1, 1)
    else:
        xs = x
    if xs.ndim != 2 or xs.shape[1] != dim:
        raise ValueError(f"points of shape {x.shape} for a {dim}-D discriminator")
    return xs, single


def _scalars(x) -> tuple[np.ndarray, tuple]:
    # 1-D families accept scalars, (n,) or (n, 1); results keep the leading shape
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1] if (x.ndim == 2 and x.shape[1] == 1) else x.shape
    return x.reshape(-1), shape


class Evaluation(NamedTuple):
    value: Union[float, np.ndarray]
    grad: np.ndarray
    kink: Union[bool, np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadraticDiscriminator:
    """D(x) = x^T A x + b^T x + c."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        a = _as_matrix(self.A)
        b = _as_vector(self.b)
        _check_symmetric(a)
        if a.shape[0] != b.size:
            raise ValueError(f"A is {a.shape} but b has size {b.size}")
        object.__setattr__(self, "A", sym(a))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def zero(cls, dim: int) -> "QuadraticDiscriminator":
        return cls(np.zeros((dim, dim)), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def n_params(self) -> int:
        return n_sym(self.dim) + self.dim

    def value(self, x):
        xs, single = _points(x, self.dim)
        v = np.einsum("ni,ij,nj->n", xs, self.A, xs) + xs @ self.b + self.c
        return float(v[0]) if single else v

    def grad(self, x):
        xs, single = _points(x, self.dim)
        g = 2 * xs @ self.A + self.b
        return g[0] if single else g

    def params(self) -> np.ndarray:
        return np.concatenate([sym_to_vec(self.A), self.b])

    def with_params(self, p) -> "QuadraticDiscriminator":
        k = n_sym(self.dim)
        return QuadraticDiscriminator(vec_to_sym(p[:k], self.dim), p[k:], self.c)

    def grad_jacobian(self, x) -> np.ndarray:
        """d grad_x D(x_i) / d params, shape (n, dim, n_params)."""
        xs, _ = _points(x, self.dim)
        basis = sym_basis(self.dim)
        ja = 2 * np.einsum("kij,nj->nik", basis, xs)
        jb = np.broadcast_to(np.eye(self.dim), (xs.shape[0], self.dim, self.dim))
        return np.concatenate([ja, jb], axis=2)

    def __sub__(self, other: "QuadraticDiscriminator") -> "QuadraticDiscriminator":
        return QuadraticDiscriminator(self.A - other.A, self.b - other.b, self.c - other.c)

    def scaled(self, k: float) -> "QuadraticDiscriminator":
        return QuadraticDiscriminator(k * self.A, k * self.b, k * self.c)

    def to_dict(self) -> dict:
        return {"family": "quadratic", "A": self.A.tolist(), "b": self.b.tolist(), "c": self.c}

    def __repr__(self):
        return f"QuadraticDiscriminator(A={self.A.tolist()}, b={self.b.tolist()}, c={self.c:g})"


@dataclass(frozen=True, eq=False)
class PiecewiseLinearDiscriminator:
    """Continuous piecewise-linear function on the real line.

    ``knots`` are strictly increasing, ``values`` are the function values at
    the knots, and the two tail slopes extend it beyond the outer knots.
    """

    knots: np.ndarray
    values: np.ndarray
    left_slope: float
    right_slope: float

    def __post_init__(self):
        k = _as_vector(self.knots)
        v = _as_vector(self.values)
        if k.size != v.size:
            raise ValueError(f"{k.size} knots but {v.size} values")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "left_slope", float(self.left_slope))
        object.__setattr__(self, "right_slope", float(self.right_slope))

    @classmethod
    def from_slopes(cls, knots, slopes, v0: float = 0.0) -> "PiecewiseLinearDiscriminator":
        """Build from the K+1 segment slopes (left tail, interior..., right tail)."""
        knots = _as_vector(knots)
        slopes = _as_vector(slopes)
        if slopes.size != knots.size + 1:
            raise ValueError(f"need {knots.size + 1} slopes for {knots.size} knots")
        steps = slopes[1:-1] * np.diff(knots)
        values = v0 + np.concatenate([[0.0], np.cumsum(steps)])
        return cls(knots, values, slopes[0], slopes[-1])

    @classmethod
    def abs_like(cls, center: float = 0.0, scale: float = 1.0) -> "PiecewiseLinearDiscriminator":
        """scale * |x - center|."""
        return cls([center], [0.0], -scale, scale)

    @property
    def dim(self) -> int:
        return 1

    @property
    def n_params(self) -> int:
        return self.knots.size + 1

    def slopes(self) -> np.ndarray:
        inner = np.diff(self.values) / np.diff(self.knots)
        return np.concatenate([[self.left_slope], inner, [self.right_slope]])

    def segment_index(self, x) -> np.ndarray:
        """Segment j holds [k_{j-1}, k_j); segment 0 is the left tail."""
        return np.searchsorted(self.knots, np.asarray(x, dtype=float), side="right")

    def value(self, x):
        flat, shape = _scalars(x)
        k, v = self.knots, self.values
        out = np.interp(flat, k, v)
        lo, hi = flat < k[0], flat > k[-1]
        out[lo] = v[0] + self.left_slope * (flat[lo] - k[0])
        out[hi] = v[-1] + self.right_slope * (flat[hi] - k[-1])
        return float(out[0]) if shape == () else out.reshape(shape)

    def grad(self, x):
        """Right-hand slope; shaped like the input (so (n, 1) in, (n, 1) out)."""
        x = np.asarray(x, dtype=float)
        s = self.slopes()[self.segment_index(x.reshape(-1))]
        return float(s[0]) if x.ndim == 0 else s.reshape(x.shape)

    def at_knot(self, x) -> np.ndarray:
        return np.isin(np.asarray(x, dtype=float), self.knots)

    def params(self) -> np.ndarray:
        return self.slopes()

    def with_params(self, p) -> "PiecewiseLinearDiscriminator":
        return PiecewiseLinearDiscriminator.from_slopes(self.knots, p, self.values[0])

    def grad_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        j = np.zeros((x.size, 1, self.n_params))
        j[np.arange(x.size), 0, self.segment_index(x)] = 1.0
        return j

    def lipschitz_constant(self) -> float:
        return float(np.max(np.abs(self.slopes())))

    def shifted(self, delta: float) -> "PiecewiseLinearDiscriminator":
        return PiecewiseLinearDiscriminator(self.knots, self.values + delta, self.left_slope, self.right_slope)

    def anchored(self, x0: float = 0.0) -> "PiecewiseLinearDiscriminator":
        """Shift by a constant so that D(x0) = 0."""
        return self.shifted(-float(self.value(np.array(x0))))

    def __sub__(self, other: "PiecewiseLinearDiscriminator") -> "PiecewiseLinearDiscriminator":
        knots = np.union1d(self.knots, other.knots)
        return PiecewiseLinearDiscriminator(
            knots,
            self.value(knots) - other.value(knots),
            self.left_slope - other.left_slope,
            self.right_slope - other.right_slope,
        )

    def to_dict(self) -> dict:
        return {
            "family": "piecewise_linear",
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "left_slope": self.left_slope,
            "right_slope": self.right_slope,
        }

    def __repr__(self):
        return f"PiecewiseLinearDiscriminator({self.knots.size} knots, slopes in [{self.slopes().min():g}, {self.slopes().max():g}])"


@dataclass(frozen=True, eq=False)
class LogRatioDiscriminator:
    """D(x) = f'(exp(l(x))) with l(x) = x^T P x / 2 + q^T x + r."""

    P: np.ndarray
    q: np.ndarray
    r: float
    spec: FDivergenceSpec

    def __post_init__(self):
        p = _as_matrix(self.P)
        q = _as_vector(self.q)
        _check_symmetric(p)
        if p.shape[0] != q.size:
            raise ValueError(f"P is {p.shape} but q has size {q.size}")
        object.__setattr__(self, "P", sym(p))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def constant(cls, spec: FDivergenceSpec, dim: int) -> "LogRatioDiscriminator":
        """The constant f'(1)."""
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0.0, spec)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def n_params(self) -> int:
        return n_sym(self.dim) + self.dim + 1

    def exponent(self, x):
        xs, single = _points(x, self.dim)
        l = 0.5 * np.einsum("ni,ij,nj->n", xs, self.P, xs) + xs @ self.q + self.r
        return float(l[0]) if single else l

    def exponent_features(self, x) -> np.ndarray:
        """Rows phi(x_i) with l(x_i) = phi(x_i) . params."""
        xs, _ = _points(x, self.dim)
        quad = 0.5 * np.einsum("kij,ni,nj->nk", sym_basis(self.dim), xs, xs)
        return np.concatenate([quad, xs, np.ones((xs.shape[0], 1))], axis=1)

    def value(self, x):
        l = self.exponent(x)
        if not np.all(np.isfinite(l)):
            raise DomainError("log-ratio exponent is not finite")
        v = self.spec.fprime_at_exp(l)
        return float(v) if np.ndim(v) == 0 else v

    def grad(self, x):
        xs, single = _points(x, self.dim)
        l = self.exponent(xs)
        g = self.spec.tf2_at_exp(l)[:, None] * (xs @ self.P + self.q)
        return g[0] if single else g

    def params(self) -> np.ndarray:
        return np.concatenate([sym_to_vec(self.P), self.q, [self.r]])

    def with_params(self, p) -> "LogRatioDiscriminator":
        k = n_sym(self.dim)
        return LogRatioDiscriminator(vec_to_sym(p[:k], self.dim), p[k : k + self.dim], p[-1], self.spec)

    def to_dict(self) -> dict:
        return {"family": "log_ratio", "P": self.P.tolist(), "q": self.q.tolist(), "r": self.r, "f": self.spec.name}

    def __repr__(self):
        return f"LogRatioDiscriminator(P={self.P.tolist()}, q={self.q.tolist()}, r={self.r:g}, f={self.spec.name})"


Discriminator = Union[QuadraticDiscriminator, PiecewiseLinearDiscriminator, LogRatioDiscriminator]


def eval_and_grad(d: Discriminator, x) -> Evaluation:
    """Value and x-gradient of ``d``; ``x`` is one point or a batch.

    Piecewise-linear functions report the right-hand slope at a knot and set
    the kink flag.
    """
    if isinstance(d, PiecewiseLinearDiscriminator):
        x = np.asarray(x, dtype=float)
        if x.size == 1:
            x0 = x.reshape(())
            return Evaluation(d.value(x0), np.array([d.grad(x0)]), bool(d.at_knot(x0)))
        flat, _ = _scalars(x)
        return Evaluation(d.value(flat), d.grad(flat).reshape(-1, 1), d.at_knot(flat))
    v = d.value(x)
    g = d.grad(x)
    kink = False if np.ndim(v) == 0 else np.zeros(np.shape(v), dtype=bool)
    return Evaluation(v, g, kink)


def project_lipschitz(d: PiecewiseLinearDiscriminator, L: float) -> PiecewiseLinearDiscriminator:
    """Clip every segment slope to [-L, L], keeping the value at the leftmost knot."""
    if not L > 0:
        raise ValueError("Lipschitz bound must be positive")
    s = d.slopes()
    if np.all(np.abs(s) <= L):
        return d
    return PiecewiseLinearDiscriminator.from_slopes(d.knots, np.clip(s, -L, L), d.values[0])


def c_concave_margin(d: QuadraticDiscriminator, eta: float, convention: str = "hessian") -> float:
    """Smallest eigenvalue of eta*I - 2A ("hessian") or eta*I - A ("literal")."""
    k = 2.0 if convention == "hessian" else 1.0
    if convention not in ("hessian", "literal"):
        raise ValueError(f"unknown c-concavity convention {convention!r}")
    return float(np.linalg.eigvalsh(eta * np.eye(d.dim) - k * d.A)[0])


def project_c_concave(
    d: QuadraticDiscriminator, eta: float, convention: str = "hessian", margin: float = C_CONCAVE_MARGIN
) -> QuadraticDiscriminator:
    """Clip the eigenvalues of A so that the c-concavity set holds with ``margin``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if c_concave_margin(d, eta, convention) >= margin:
        return d
    k = 2.0 if convention == "hessian" else 1.0
    vals, vecs = np.linalg.eigh(d.A)
    vals = np.minimum(vals, (eta - margin) / k)
    return QuadraticDiscriminator(sym((vecs * vals) @ vecs.T), d.b, d.c)
