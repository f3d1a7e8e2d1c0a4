import pytest

from ouconsume.model import EXAMPLE
from ouconsume.value import build_value_function


@pytest.fixture(scope="session")
def params():
    return EXAMPLE


@pytest.fixture(scope="session")
def vf(params):
    return build_value_function(params)


@pytest.fixture(scope="session")
def r_star(vf):
    return vf.r_star
