import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tandemqbd.model import TandemParams

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", 40)),
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture
def second():
    """mu1 > mu2: queue 2 is the bottleneck."""
    return TandemParams(1.0, 3.0, 2.0)


@pytest.fixture
def first():
    """mu1 < mu2: queue 1 is the bottleneck."""
    return TandemParams(1.0, 2.0, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion lines collected by test_acceptance, echoed even when output is captured
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
