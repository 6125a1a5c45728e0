import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gchain import GaussianStream, PointSet

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def stream():
    return GaussianStream(12345)


def random_points(seed, n, dim, scale=1.0):
    return PointSet(scale * np.random.default_rng(seed).standard_normal((n, dim)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
