import numpy as np
import pytest

from fraceig.geometry import Domain


@pytest.fixture(scope="session")
def disk16():
    return Domain.ball(1.0, h=1 / 16)


@pytest.fixture(scope="session")
def disk32():
    return Domain.ball(1.0, h=1 / 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
