import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EXAMPLE_KERNEL = np.array([[1.0, 0.9, 0.0],
                           [0.9, 1.0, 0.0],
                           [0.0, 0.0, 1.0]])


def random_psd(rng, p, rank=None):
    rank = p if rank is None else rank
    A = rng.standard_normal((p, rank))
    return A @ A.T / rank


def random_correlation(rng, p, n=None):
    X = rng.standard_normal((n or 3 * p + 5, p))
    X[:, 1:] += 0.7 * X[:, :1]
    return np.atleast_2d(np.corrcoef(X, rowvar=False))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
