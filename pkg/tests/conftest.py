import pytest

from prandtl_blowup.grid import make_grid
from prandtl_blowup.models import LiftParams, WeightSpec
from prandtl_blowup.weight import build_weight


@pytest.fixture(scope="session")
def weight():
    return build_weight(WeightSpec())


@pytest.fixture(scope="session")
def full_grid():
    """[0, 40] with h = 0.01."""
    return make_grid(40.0, 4000)


@pytest.fixture
def small_grid():
    return make_grid(20.0, 1000)


@pytest.fixture
def unit_lift():
    return LiftParams(kappa=1.0)
