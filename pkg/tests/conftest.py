import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mixtem.signal_model import SincGrid, SincSignal, VectorSignal  # noqa: E402


@pytest.fixture
def grid16():
    return SincGrid(np.pi, 0.0, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_signal(rng, grid, scale=1.0):
    return SincSignal(grid, rng.uniform(-scale, scale, grid.count))


def random_vector(rng, grid, rows, scale=1.0):
    return VectorSignal.from_matrix(grid, rng.uniform(-scale, scale, (rows, grid.count)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
