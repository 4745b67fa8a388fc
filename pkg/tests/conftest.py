import numpy as np
import pytest

from dmnet.tensor_core import isotropic_compliance, orthotropic_compliance


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, n=3, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * np.eye(n))


def random_compliance(rng):
    E11, E22 = 10.0 ** rng.uniform(-1, 1, 2)
    G12 = rng.uniform(0.25, 0.5) * np.sqrt(E11 * E22)
    nu12 = rng.uniform(0.1, 0.4) * np.sqrt(E22 / E11)
    return orthotropic_compliance(E11, E22, G12, nu12)


@pytest.fixture
def iso_pair():
    return isotropic_compliance(1.0, 0.3), isotropic_compliance(10.0, 0.2)
