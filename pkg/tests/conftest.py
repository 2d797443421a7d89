import numpy as np
import pytest

from elastoscat.capacitance import CapacitanceMatrix, sphere_capacitance_exact
from elastoscat.medium import IncidentPlaneWave, make_medium

ACCEPTANCE_LINES: list = []


@pytest.fixture
def medium():
    return make_medium(1.0, 1.0, 1.0)


@pytest.fixture
def wave():
    return IncidentPlaneWave.along([0.0, 0.0, 1.0], 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sphere_cap():
    """Analytic capacitance of a unit-diameter ball for lambda = mu = 1."""
    c = sphere_capacitance_exact(0.5, 1.0, 1.0)
    return CapacitanceMatrix.scalar(c, 1.0, 1.0, c_acoustic=2 * np.pi)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
