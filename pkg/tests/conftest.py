import numpy as np
import pytest

from expbergman.quadrature import IntegrationConfig


def random_point(rng, n, max_modulus=0.99):
    g = rng.standard_normal(2 * n)
    v = (g[:n] + 1j * g[n:]) / np.linalg.norm(g)
    return v * max_modulus * rng.random() ** (1.0 / (2 * n))


def ray(n, t):
    z = np.zeros(n, dtype=complex)
    z[0] = t
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def cfg():
    return IntegrationConfig(samples=20000, seed=11)
