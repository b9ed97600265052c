import numpy as np
import pytest

from roughdelay.path_algebra import Grid, GridPath, HolderExponents, tensor_from_quadrature
from roughdelay.signals import SignalSpec, gen_brownian


def linear_path(n=100, a=0.0, b=1.0, slope=1.0):
    g = Grid.uniform(a, b, n)
    return GridPath(g, (slope * g.times)[:, None])


@pytest.fixture
def exps():
    return HolderExponents(0.4, 0.02, 0.9)


@pytest.fixture
def unit_line():
    return linear_path(100)


@pytest.fixture(scope="session")
def brownian_2d():
    spec = SignalSpec(kind="brownian", dim=2, T=1.0, fine_n=512, seed=7, r_max=0.25)
    return gen_brownian(spec, ito_correction=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tt_tensor():
    """Trapezoid tensor of x = t against y = t on [0, 1]."""
    p = linear_path(100)
    return tensor_from_quadrature(p, p)
