import numpy as np
import pytest

from fracwave.modal_dynamics import classify
from fracwave.spectral_core import Grid1D, assemble, eigenpairs


@pytest.fixture(scope="session")
def small():
    """Coarse grid shared by the fast unit tests: (grid, system, basis)."""
    g = Grid1D(n_interior=96, n_exterior=192)
    sy = assemble(g, 0.5)
    return g, sy, eigenpairs(sy, 12)


@pytest.fixture(scope="session")
def medium():
    g = Grid1D(n_interior=256, n_exterior=512)
    sy = assemble(g, 0.5)
    return g, sy, eigenpairs(sy, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spectra(basis):
    return {d: classify(d, basis.lambdas) for d in (0.0, 0.1, 1.0)}


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
