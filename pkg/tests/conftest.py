import numpy as np
import pytest
from scipy.stats import ortho_group

from bmpursuit.model import BoltzmannParams, SignalModel


def banded_w(m, L, rng, low=-1.0, high=1.0):
    U = np.triu(rng.uniform(low, high, (m, m)), 1)
    i, j = np.indices((m, m))
    U = np.where(j - i <= L, U, 0.0)
    return U + U.T


def random_unitary_model(m, rng, L=None, sigma=None, w_zero=False):
    """Unitary instance with parameters in the synthetic ranges."""
    A = ortho_group.rvs(m, random_state=rng) if m > 1 else np.ones((1, 1))
    W = np.zeros((m, m)) if (w_zero or L is None) else banded_w(m, L, rng)
    b = rng.uniform(-3.0, -2.0, m)
    var = rng.uniform(15.0, 60.0, m) ** 2
    sigma = rng.uniform(2.0, 20.0) if sigma is None else sigma
    return SignalModel(A, var, sigma, BoltzmannParams(W, b))


def random_general_model(n, m, rng, sigma=5.0, w_scale=0.3):
    A = rng.standard_normal((n, m))
    A /= np.linalg.norm(A, axis=0)
    U = np.triu(rng.uniform(-w_scale, w_scale, (m, m)), 1)
    b = rng.uniform(-2.0, -0.5, m)
    var = rng.uniform(5.0, 30.0, m) ** 2
    return SignalModel(A, var, sigma, BoltzmannParams(U + U.T, b))


def draw_signal(model, rng, k=None):
    """Noisy signal from a random support of size ``k`` (or a prior-ish draw)."""
    m = model.m
    if k is None:
        k = int(rng.integers(0, min(4, m) + 1))
    idx = rng.choice(m, size=k, replace=False)
    x = np.zeros(m)
    x[idx] = rng.standard_normal(k) * np.sqrt(model.coef_vars[idx])
    return model.dictionary @ x + model.noise_std * rng.standard_normal(model.n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
