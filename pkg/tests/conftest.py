import numpy as np
import pytest

from fdsec.config import SystemConfig


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def default_config():
    return SystemConfig()


@pytest.fixture
def tiny_config():
    """Small instance for run-level tests: fast but structurally complete."""
    return SystemConfig(k=1, l=1, m=1, ne=(2,), nt=3, nr=3,
                        max_iters=10, sca_tol=5e-3)
