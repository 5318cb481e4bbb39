import sys
import numpy as np
import pytest

from smg.data import synth_logistic_dataset, synth_quadratic_dataset
from smg.problems import quadratic_problem


@pytest.fixture
def pair():
    """f(w;1) = 1/2 (w-1)^2, f(w;2) = 1/2 (w+1)^2 up to constants."""
    return quadratic_problem([[[1.0]], [[1.0]]], [[1.0], [-1.0]])


@pytest.fixture
def quad():
    return synth_quadratic_dataset(12, 4, seed=7, condition=5.0)


@pytest.fixture
def logistic():
    return synth_logistic_dataset(40, 6, seed=3).problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
