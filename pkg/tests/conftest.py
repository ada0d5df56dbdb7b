import math

import numpy as np
import pytest
from hypothesis import settings

from nfpe.coefficients import make_builtin, log_quadratic_potential
from nfpe.grid import build_grid

settings.register_profile("nfpe", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("nfpe")


@pytest.fixture(scope="session")
def pot():
    return log_quadratic_potential(d=3)


@pytest.fixture(scope="session")
def boltzmann():
    return make_builtin("boltzmann")


@pytest.fixture(scope="session")
def remark33():
    return make_builtin("remark33_log")


@pytest.fixture(scope="session")
def nondegenerate():
    return make_builtin("nondegenerate", gamma=0.1)


@pytest.fixture(scope="session")
def grid200():
    return build_grid(3, 30.0, 200)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
