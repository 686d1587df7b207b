import numpy as np
import pytest

from nonsmooth_control.beta import PiecewiseLinearBeta
from nonsmooth_control.grid import build_grid
from nonsmooth_control.objective import ProblemParams


@pytest.fixture(scope="session")
def grid31():
    return build_grid(31, 31)


@pytest.fixture(scope="session")
def relu():
    return PiecewiseLinearBeta.relu()


@pytest.fixture(scope="session")
def unit_square(grid31, relu):
    """eps=0.1, alpha=1, s=0.5, beta=max(0,.), f=-1, y_d=-0.1, g_sh=0."""
    return ProblemParams(grid31, relu, 0.1, 1.0, 0.5, -1.0, -0.1, 0.0)


@pytest.fixture(scope="session")
def unit_square_opt(unit_square):
    from nonsmooth_control.objective import optimize
    res = optimize(unit_square, unit_square.grid.zeros(), seed=0)
    assert res.certified
    return res


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
