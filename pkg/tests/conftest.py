from fractions import Fraction as F

import pytest
from hypothesis import HealthCheck, settings

from ghalab.problems import build_family

settings.register_profile("ghalab", derandomize=True, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ghalab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def thm4_family():
    # A = [1, 0], kappa = 3/8: v = (0, 3/4), e = (1, 0)
    return build_family([[1, 0]], F(3, 8), 4, "thm4", seed=3)


@pytest.fixture(scope="session")
def thm5_family():
    # A = [3/5, 4/5], epsilon1 = 1/8: v = (2/5, -3/10), e = (3/5, 4/5)
    return build_family([[F(3, 5), F(4, 5)]], F(1, 8), 4, "thm5", seed=0)
