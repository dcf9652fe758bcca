import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dualmax.dual_domain import build_dual_cone
from dualmax.instances import BIN3_ENDOWMENT, bin1, bin2, seed_from_env
from dualmax.utility import kink_utility, log_utility

settings.register_profile(
    "dualmax", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("dualmax")


@pytest.fixture
def rng():
    return np.random.default_rng(seed_from_env())


@pytest.fixture
def bin1_market():
    return bin1()


@pytest.fixture
def bin2_market():
    return bin2()


@pytest.fixture
def bin1_dc(bin1_market):
    return build_dual_cone(*bin1_market)


@pytest.fixture
def bin2_dc(bin2_market):
    return build_dual_cone(*bin2_market)


@pytest.fixture
def log_u():
    return log_utility()


@pytest.fixture
def kink():
    return kink_utility()


@pytest.fixture
def bin3_endowment():
    return np.array(BIN3_ENDOWMENT)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
