import math
import sys

import numpy as np
import pytest

from srdelab.spectral import dirichlet_interval_basis


@pytest.fixture(scope="session")
def basis64():
    return dirichlet_interval_basis(math.pi, 64)


@pytest.fixture(scope="session")
def basis32():
    return dirichlet_interval_basis(math.pi, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
