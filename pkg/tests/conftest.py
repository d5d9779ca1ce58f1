"""Shared fixtures: small Gaussian models and reproducible streams."""

import numpy as np
import pytest

from gaussian_core import RngStream, build_model, identity_model, random_psd


@pytest.fixture
def identity2():
    return identity_model(2)


@pytest.fixture
def corr_model():
    """Sigma = [[2, 1], [1, 2]]: lambda* = 3, sigma*^2 = 2."""
    return build_model(np.zeros(2), np.array([[2.0, 1.0], [1.0, 2.0]]))


@pytest.fixture
def stream():
    return RngStream(12345, 0)


@pytest.fixture
def model_factory():
    """random_model(seed, dim, max_eig) -> model with lambda* <= max_eig."""

    def make(seed: int, dim: int, max_eig: float = 2.0):
        gen = np.random.default_rng(seed)
        cov = random_psd(dim, gen)
        top = np.linalg.eigvalsh(cov)[-1]
        cov = cov * (max_eig * gen.uniform(0.25, 1.0) / top)
        mean = gen.uniform(-1.0, 1.0, dim)
        return build_model(mean, 0.5 * (cov + cov.T))

    return make


@pytest.fixture
def sweep_models(model_factory):
    """Twenty random 3-d models shared by the statistical sweeps."""
    return [model_factory(300 + k, 3) for k in range(20)]
