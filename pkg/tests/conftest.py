import numpy as np
import pytest

from pawf.curve import MonomialCurve
from pawf.fields import Box
from pawf.geometry import build_setup

UNIT = Box(0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def parabola():
    return MonomialCurve.parabola()


@pytest.fixture(scope="session")
def setup10(parabola):
    return build_setup(parabola, UNIT, 10, 1)


@pytest.fixture(scope="session")
def setup32(parabola):
    return build_setup(parabola, UNIT, 32, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
