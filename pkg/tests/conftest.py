import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from srblab import Baker, Lueroth, PerturbedLueroth

settings.register_profile("srblab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("srblab")

# Frozen oracle values. Each was computed once by an implementation that shares
# no code with the package (plain series summation, sympy + bisection).
LUEROTH_SERIES = 2.046247821862439  # sum_{n <= 10^6} log(n(n+1)) / (n(n+1))
LUEROTH_SERIES_TAIL = 2.96e-5        # integral bound on the remainder beyond 10^6
EPS_LAST_PASSING = 0.073             # perturbed family: all four margins > 0
EPS_FIRST_FAILING = 0.074


@pytest.fixture(scope="session")
def baker():
    return Baker(2)


@pytest.fixture(scope="session")
def lueroth():
    return Lueroth()


@pytest.fixture(scope="session")
def perturbed():
    return PerturbedLueroth(0.005)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
