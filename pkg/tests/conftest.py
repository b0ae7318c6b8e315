import numpy as np
import pytest

from oslearn import _kernels
from oslearn.losses import default_logit_dgp, default_plm_dgp


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warm_up()


@pytest.fixture(scope="session")
def plm_dgp():
    return default_plm_dgp()


@pytest.fixture(scope="session")
def logit_dgp():
    return default_logit_dgp()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240913)
