import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True, scope="session")
def _jit_warm():
    from twofish_spa.attack import warmup

    warmup()
