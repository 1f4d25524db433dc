import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, d, cond=None):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is None:
        ev = rng.uniform(0.0, 3.0, d)
    else:
        ev = np.logspace(0, -np.log10(cond), d)
    return (q * ev) @ q.T


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out
