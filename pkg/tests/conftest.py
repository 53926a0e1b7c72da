import math

import numpy as np
import pytest

from stochbal.model import FluxModel, Grid, InitialData, NoiseModel, Problem


@pytest.fixture
def grid64():
    return Grid.uniform(64)


def make_problem(flux=None, noise=None, eps=0.0, initial=None, T=0.5):
    return Problem(flux or FluxModel.burgers(), noise or NoiseModel.zero(), eps,
                   initial or InitialData.make("bump", center=math.pi, width=0.6), T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
