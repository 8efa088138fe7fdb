import numpy as np
import pytest

from entot.measures import GaussianMixture, NoiseModel


@pytest.fixture(scope="session")
def std_normal_1d():
    """N(0, 1) in dimension 1."""
    return GaussianMixture(means=[[0.0]], variances=[1.0], weights=[1.0])


@pytest.fixture(scope="session")
def bimodal_mixture_1d():
    """0.5 N(+1, 1) + 0.5 N(-1, 1) in dimension 1."""
    return GaussianMixture(
        means=[[1.0], [-1.0]], variances=[1.0, 1.0], weights=[0.5, 0.5]
    )


@pytest.fixture(scope="session")
def unit_noise_1d():
    return NoiseModel(sigma_g=1.0, dim=1)


GAUSS_ENTROPY_VAR1 = 1.4189385332046727  # 0.5 log(2 pi e)
GAUSS_ENTROPY_VAR2 = 1.7655121234846454  # 0.5 log(4 pi e)


def random_uniform_measure(rng: np.random.Generator, n: int, d: int, scale: float = 2.0):
    from entot.measures import DiscreteMeasure

    return DiscreteMeasure.uniform(rng.uniform(-scale, scale, size=(n, d)))
