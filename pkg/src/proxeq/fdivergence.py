"""f-divergence generator tables.

Each spec carries explicit function tables rather than symbolic derivatives.
The optional ``*_exp`` entries evaluate the same quantities at ``t = exp(l)``
without forming ``t``; they are what the log-ratio discriminator uses, since
density ratios between Gaussians overflow long before the integrands do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Fn = Callable[[np.ndarray], np.ndarray]

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class FDivergenceSpec:
    name: str
    f: Fn
    f_prime: Fn
    f_second: Fn
    f_conj: Fn
    f_conj_of_f_prime: Fn  # t -> t f'(t) - f(t)
    f_reverse: Optional[Fn] = None  # s -> s f(1/s)
    f_prime_exp: Optional[Fn] = None  # l -> f'(e^l)
    conj_f_prime_exp: Optional[Fn] = None  # l -> f*(f'(e^l))
    t_f_second_exp: Optional[Fn] = None  # l -> e^l f''(e^l)
    t2_f_second_exp: Optional[Fn] = None  # l -> e^{2l} f''(e^l), the slope of f* o D in l
    reverse_negexp: Optional[Fn] = None  # l -> s f(1/s) at s = e^{-l}

    def reverse(self, s):
        if self.f_reverse is not None:
            return self.f_reverse(s)
        s = np.asarray(s, dtype=float)
        return s * self.f(1.0 / s)

    def fprime_at_exp(self, l):
        if self.f_prime_exp is not None:
            return self.f_prime_exp(l)
        return self.f_prime(np.exp(l))

    def conj_fprime_at_exp(self, l):
        if self.conj_f_prime_exp is not None:
            return self.conj_f_prime_exp(l)
        return self.f_conj_of_f_prime(np.exp(l))

    def tf2_at_exp(self, l):
        if self.t_f_second_exp is not None:
            return self.t_f_second_exp(l)
        t = np.exp(l)
        return t * self.f_second(t)

    def reverse_at_negexp(self, l):
        if self.reverse_negexp is not None:
            return self.reverse_negexp(l)
        return self.reverse(np.exp(-np.asarray(l, dtype=float)))

    def conj_over_t_at_exp(self, l):
        """f*(f'(t)) / t = f'(t) - f(t)/t at t = e^l, bounded for large l."""
        return self.fprime_at_exp(l) - self.reverse_at_negexp(l)

    def t2f2_at_exp(self, l):
        if self.t2_f_second_exp is not None:
            return self.t2_f_second_exp(l)
        return np.exp(l) * self.tf2_at_exp(l)

    def conjugate_identity_error(self, grid=None) -> float:
        """max |f*(f'(t)) - (t f'(t) - f(t))| over the grid."""
        t = np.linspace(0.1, 10.0, 100) if grid is None else np.asarray(grid, dtype=float)
        lhs = self.f_conj(self.f_prime(t))
        rhs = t * self.f_prime(t) - self.f(t)
        tab = self.f_conj_of_f_prime(t)
        return float(max(np.max(np.abs(lhs - rhs)), np.max(np.abs(tab - rhs))))

    def admissible(self, grid=None, tol: float = 1e-12) -> bool:
        """Whether t^2 f''(t) is non-decreasing on a log-spaced grid over (0, inf)."""
        t = np.logspace(-6, 6, 2001) if grid is None else np.asarray(grid, dtype=float)
        h = t**2 * self.f_second(t)
        return bool(np.all(np.diff(h) >= -tol * np.maximum(1.0, np.abs(h[1:]))))


def _softplus(l):
    return np.logaddexp(0.0, l)


def _sigmoid_neg(l):
    # 1 / (1 + e^l)
    return np.exp(-_softplus(l))


def _jsd_f_exp(m):
    # f_JSD(e^m) without forming e^m where it would overflow
    m = np.asarray(m, dtype=float)
    return np.exp(m) * m - (np.exp(m) + 1) * (_softplus(m) - LOG2)


def _jsd_f(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
    return xlogx - (t + 1) * np.log((t + 1) / 2)


JSD = FDivergenceSpec(
    name="jsd",
    f=_jsd_f,
    f_prime=lambda t: np.log(2 * np.asarray(t) / (np.asarray(t) + 1)),
    f_second=lambda t: 1.0 / (np.asarray(t) * (np.asarray(t) + 1)),
    f_conj=lambda s: -np.log(2 - np.exp(s)),
    f_conj_of_f_prime=lambda t: np.log((np.asarray(t) + 1) / 2),
    f_reverse=_jsd_f,
    f_prime_exp=lambda l: LOG2 + l - _softplus(l),
    conj_f_prime_exp=lambda l: _softplus(l) - LOG2,
    t_f_second_exp=_sigmoid_neg,
    t2_f_second_exp=lambda l: _sigmoid_neg(-np.asarray(l)),
    reverse_negexp=lambda l: _jsd_f_exp(-np.asarray(l, dtype=float)),
)


def _kl_f(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)


KL = FDivergenceSpec(
    name="kl",
    f=_kl_f,
    f_prime=lambda t: np.log(t) + 1,
    f_second=lambda t: 1.0 / np.asarray(t),
    f_conj=lambda s: np.exp(np.asarray(s) - 1),
    f_conj_of_f_prime=lambda t: np.asarray(t, dtype=float),
    f_reverse=lambda s: -np.log(s),
    f_prime_exp=lambda l: np.asarray(l) + 1.0,
    conj_f_prime_exp=lambda l: np.exp(l),
    t_f_second_exp=lambda l: np.ones_like(np.asarray(l, dtype=float)),
    t2_f_second_exp=lambda l: np.exp(l),
    reverse_negexp=lambda l: np.asarray(l, dtype=float),
)

PEARSON = FDivergenceSpec(
    name="pearson",
    f=lambda t: (np.asarray(t) - 1) ** 2,
    f_prime=lambda t: 2 * (np.asarray(t) - 1),
    f_second=lambda t: 2 * np.ones_like(np.asarray(t, dtype=float)),
    f_conj=lambda s: np.asarray(s) + np.asarray(s) ** 2 / 4,
    f_conj_of_f_prime=lambda t: np.asarray(t) ** 2 - 1,
    f_reverse=lambda s: (1 - np.asarray(s)) ** 2 / np.asarray(s),
)

BUILTIN = {spec.name: spec for spec in (JSD, KL, PEARSON)}


def get_spec(name: str) -> FDivergenceSpec:
    try:
        return BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown f-divergence {name!r}; choose from {sorted(BUILTIN)}") from None
