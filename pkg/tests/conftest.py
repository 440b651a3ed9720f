import numpy as np
import pytest

from herdquad.gmm import GaussianMixture, default_gmm, make_random_gmm
from herdquad.kernel import RbfKernel, default_lengthscale


@pytest.fixture(scope="session")
def gmm():
    return default_gmm()


@pytest.fixture(scope="session")
def kernel(gmm):
    return RbfKernel(default_lengthscale(gmm))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_gmm(rng, dim=2, num_components=None):
    j = num_components or int(rng.integers(1, 6))
    return make_random_gmm(rng, num_components=j, dim=dim, eig_range=(0.01, 0.08))


def standard_normal(dim=2):
    return GaussianMixture.from_arrays([1.0], np.zeros((1, dim)), np.eye(dim)[None])
