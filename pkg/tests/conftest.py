import os
import tempfile

# log files of the test run go to a scratch directory
os.environ.setdefault("ESCAPEPATH_LOG_DIR", tempfile.mkdtemp(prefix="escapepath-logs-"))
os.environ.pop("ESCAPEPATH_CONFIG", None)
os.environ.pop("ESCAPEPATH_THREADS", None)

import numpy as np
import pytest

from escapepath.core.bvp import solve_base_connections
from escapepath.core.melnikov import compute_corrections
from escapepath.core.model import get_model


@pytest.fixture(scope="session")
def double_well():
    return get_model("double_well")


@pytest.fixture(scope="session")
def symmetric_well():
    return get_model("double_well_symmetric")


@pytest.fixture(scope="session")
def gradient_well():
    return get_model("double_well_gradient")


@pytest.fixture(scope="session")
def bases(double_well):
    return solve_base_connections(double_well)


@pytest.fixture(scope="session")
def corrections(double_well, bases):
    return compute_corrections(double_well, bases.reversed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
