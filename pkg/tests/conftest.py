import pytest

from mkglab.experiment import unit_profile
from mkglab.grid import GridSpec
from mkglab.ground_state import rescale_profile
from mkglab.soliton import SolitonParams



@pytest.fixture(scope="session")
def unit2():
    return unit_profile(2.0)


@pytest.fixture(scope="session")
def prof08(unit2):
    return rescale_profile(unit2, 1.0, 0.8)


@pytest.fixture(scope="session")
def grid32():
    return GridSpec(16.0, 32)


@pytest.fixture
def lam_boost():
    return SolitonParams(0.8, 0.3, (0.4, -0.2, 0.1), (0.1, -0.05, 0.3))
