import numpy as np
import pytest

from clitools import BenchmarkRuns
from reporting import ACCEPTANCE, format_line
from gridopt import FactorGrid, LinearModel

def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(format_line(number, *ACCEPTANCE[number]))


@pytest.fixture(scope="session")
def benchmark_runs(tmp_path_factory):
    return BenchmarkRuns(tmp_path_factory.mktemp("runs"))


@pytest.fixture
def line_grid():
    return FactorGrid([[-1.0, 0.0, 1.0]])


@pytest.fixture
def line_model():
    return LinearModel(lambda X: np.column_stack([np.ones(len(X)), X[:, 0]]), 2, 1, name="line")


@pytest.fixture
def quad_model():
    return LinearModel(lambda X: np.column_stack([np.ones(len(X)), X[:, 0], X[:, 0] ** 2]), 3, 1, name="quadratic")
