import numpy as np
import pytest

from ulight.divergence import DivergenceSpec
from ulight.gmm import GaussianMixture
from ulight.plan import PlanModel


def random_mixture(rng, n_components, dim, spread=1.0, log_cov_scale=0.3):
    return GaussianMixture(
        rng.normal(size=n_components),
        rng.normal(scale=spread, size=(n_components, dim)),
        rng.normal(scale=log_cov_scale, size=(n_components, dim)),
    )


def random_plan(rng, dim=2, K=3, L=2, epsilon=0.5, div1=None, div2=None):
    return PlanModel(
        epsilon,
        random_mixture(rng, K, dim),
        random_mixture(rng, L, dim),
        div1 or DivergenceSpec("scaled_kl", 1.0),
        div2 or DivergenceSpec("scaled_kl", 1.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
