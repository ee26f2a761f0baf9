import pytest

from relaylattice.admissibility import build_constants
from relaylattice.params import Params
from relaylattice.sim import simulate


@pytest.fixture(scope="session")
def params15():
    return Params(c=0.5, h1=1.5)


@pytest.fixture(scope="session")
def params20():
    return Params(c=0.5, h1=2.0)


@pytest.fixture(scope="session")
def hist15(params15):
    return simulate(params15, 100)


@pytest.fixture(scope="session")
def hist20(params20):
    return simulate(params20, 100)


@pytest.fixture(scope="session")
def table20(params20):
    return build_constants(params20, n_scan_max=2000)
