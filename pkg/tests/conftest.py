import numpy as np
import pytest

from lipdyn.config import load_fixture
from lipdyn.hyperbolic import SaddleSystem


@pytest.fixture(scope="session")
def sin_saddle():
    return SaddleSystem.from_map(load_fixture("sin_saddle"))


@pytest.fixture(scope="session")
def linear_saddle():
    return SaddleSystem.from_map(load_fixture("linear_saddle"))


@pytest.fixture(scope="session")
def logistic():
    return load_fixture("logistic")


@pytest.fixture(scope="session")
def piecewise_logistic():
    return load_fixture("piecewise_logistic")


def bisect_root(fn, a, b, iters=200):
    """Plain bisection; ``fn(a)`` and ``fn(b)`` must differ in sign."""
    fa = fn(a)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
