import numpy as np
import pytest

from microswarm.dynamics import SwarmParams, make_state
from microswarm.groups import allocate_groups

REF_STARTS = [[0, i] for i in range(6)]
REF_GOALS = [[7, 4], [7, 17], [7, 13], [7, 12], [7, 7], [7, 15]]


@pytest.fixture
def alloc6():
    return allocate_groups(6)


@pytest.fixture
def params6():
    return SwarmParams(6, turn_gain=20.0)


@pytest.fixture
def ref_q0():
    return make_state(REF_STARTS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
