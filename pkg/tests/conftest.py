import numpy as np
import pytest

from coldplasma.geometry import build_domain, default_spec
from coldplasma.operators import Grid


@pytest.fixture(scope="session")
def default_domain():
    return build_domain(default_spec(K=0.0))


@pytest.fixture(scope="session")
def domain_k05():
    return build_domain(default_spec(K=0.5))


@pytest.fixture(scope="session")
def grid64(default_domain):
    return Grid.from_domain(default_domain, 64, 64)


@pytest.fixture(scope="session")
def grid128(default_domain):
    return Grid.from_domain(default_domain, 128, 128)
