import numpy as np
import pytest

from ppimpc import casestudy
from ppimpc.mpc import build_ocp
from ppimpc.synthesis import synthesize


@pytest.fixture(scope="session")
def dcdc_model():
    return casestudy.model()


@pytest.fixture(scope="session")
def dcdc(dcdc_model):
    return synthesize(dcdc_model, Q=casestudy.Q, R=casestudy.R, N=casestudy.N, r=casestudy.FAN_SIZE)


@pytest.fixture(scope="session")
def dcdc_ocp(dcdc):
    return build_ocp(dcdc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the test report
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
