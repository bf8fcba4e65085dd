import sys

import numpy as np
import pytest

from swapnpa.presets import preset
from swapnpa.scenario import CoefficientMatrix, Scenario


@pytest.fixture
def E33():
    return preset("paper-33")


@pytest.fixture
def E34():
    return preset("paper-34")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_E(rng, m=3, n=3):
    return CoefficientMatrix(rng.uniform(-1, 1, size=(m, n)))


@pytest.fixture
def small_scenario():
    return Scenario(3, 3, 1, True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT):
            terminalreporter.write_line(line)
