import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from parampc.cases import CASES, build_case  # noqa: E402
from parampc.tracking import tracking_weights  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def msd():
    return build_case("msd")


@pytest.fixture(scope="session")
def hex_model():
    return build_case("hex")


@pytest.fixture(scope="session")
def msd_weights(msd):
    d = CASES["msd"]
    return tracking_weights(msd, d.horizon, d.q_scale, d.r_scale)


@pytest.fixture(scope="session")
def hex_weights(hex_model):
    d = CASES["hex"]
    return tracking_weights(hex_model, d.horizon, d.q_scale, d.r_scale)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
