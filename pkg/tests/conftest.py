import numpy as np
import pytest

from ttjac.grid import build_equal_mass_grid


@pytest.fixture(scope="session")
def grid8():
    return build_equal_mass_grid(8)


@pytest.fixture(scope="session")
def grid32():
    return build_equal_mass_grid(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
