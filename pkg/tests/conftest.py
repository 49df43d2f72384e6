import numpy as np
import pytest

from vicsek_sandpile import build


@pytest.fixture(scope="session")
def g0():
    return build(0)


@pytest.fixture(scope="session")
def g1():
    return build(1)


@pytest.fixture(scope="session")
def g2():
    return build(2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
