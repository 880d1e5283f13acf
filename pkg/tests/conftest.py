import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def unit_modulus(rng, *shape):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, shape))


def random_isometry(rng, n, k):
    q, _ = np.linalg.qr(crandn(rng, n, k))
    return q


def random_hpd(rng, n, floor=0.1):
    a = crandn(rng, n, n)
    return a @ a.conj().T + floor * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
