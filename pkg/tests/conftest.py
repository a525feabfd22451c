import numpy as np
import pytest
from hypothesis import settings

from multicause import TRUE_THETA, HierarchicalModel, Mcar, NmarLogisticCentered, simulate

# Numba compiles on first call, which can exceed hypothesis' default deadline.
settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

SCENARIO_I = HierarchicalModel((Mcar(0.25), NmarLogisticCentered(1.0 / 7.0, 50.0)))


@pytest.fixture(scope="session")
def scenario_i_model():
    return SCENARIO_I


@pytest.fixture(scope="session")
def small_sample():
    """One scenario-(i) dataset with n = 100."""
    return simulate(TRUE_THETA, SCENARIO_I, 100, np.random.default_rng(11))


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
