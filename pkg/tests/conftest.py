import numpy as np
import pytest

from wce.basis import BasisSpec
from wce.utils import TimeBasis


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long running studies (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.RandomState(1234)


@pytest.fixture
def trig_basis():
    return BasisSpec(1.0, TimeBasis.TRIG, n_time=4, m_noise=2)


@pytest.fixture
def haar_basis():
    return BasisSpec(1.0, TimeBasis.HAAR, n_time=4, m_noise=1, haar_root_level=1)
