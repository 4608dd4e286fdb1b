import numpy as np
import pytest

from mpnet_online.array_geometry import Dictionary, build_dictionary, nominal_ula


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ula64():
    return nominal_ula(64)


@pytest.fixture(scope="session")
def dict64(ula64):
    return build_dictionary(ula64, 512)


def random_dictionary(rng, n, a):
    atoms = rng.standard_normal((n, a)) + 1j * rng.standard_normal((n, a))
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms, np.zeros(a), True)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
