import logging

import pytest

from levy_sim import JumpMeasureSpec
from likelihood import JumpTestParams

logging.basicConfig(level=logging.DEBUG)


@pytest.fixture
def unit_exp():
    """nu(dx) = e^{-x} dx."""
    return JumpMeasureSpec.exponential(intensity=1.0, scale=1.0)


@pytest.fixture
def unit_jump_params(unit_exp):
    return JumpTestParams(a=(1.0, 1.0), sigma=(1.0, 1.0), measures=(unit_exp, unit_exp))
