import math

import numpy as np
import pytest

from berwald.metrics import ScaleFactor, deformed_rw, flat_deformed

RW_POINT = [1.0, 0.3, math.pi / 2, 0.0]
RW_VELOCITY = [2.0, 1.0, 0.0, 0.0]
PHI_SAMPLE = math.exp(0.25) - 1.0


def richardson(f, x, h1=1e-4, h2=1e-5):
    """Central differences at two steps combined to cancel the h^2 term."""
    d1 = (f(x + h1) - f(x - h1)) / (2 * h1)
    d2 = (f(x + h2) - f(x - h2)) / (2 * h2)
    ratio = (h1 / h2) ** 2
    return (ratio * d2 - d1) / (ratio - 1.0)


@pytest.fixture(scope="session")
def rw():
    return deformed_rw(0.1, ScaleFactor("power", 1.0))


@pytest.fixture(scope="session")
def flat():
    return flat_deformed()


@pytest.fixture(scope="session")
def flat_polar():
    return flat_deformed(chart="spherical")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def rw_normal_chart(rw):
    from berwald.geodesics import build_normal_chart

    return build_normal_chart(rw, [2.0, 0.3, math.pi / 2, 0.0])


ACCEPTANCE_LINES = []


def acceptance_line(number, title, passed, detail):
    line = f"[acceptance {number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
