import numpy as np
import pytest

from idbounds import core


@pytest.fixture
def bsc01():
    return core.bsc(0.1)


@pytest.fixture
def gen():
    return np.random.default_rng(20240521)
