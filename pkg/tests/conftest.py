import numpy as np
import pytest

from suprand import simulation as sim
from suprand.data import Column, FeatureSchema


def synthetic_truth(n, seed=0):
    ds = sim.generate_covariates(sim.BANK_COLUMNS, n, seed, sim.BANK_HIDDEN)
    tau = sim.simulate_tau(ds, sim.BANK_TAU_COLUMNS, seed)
    beta = sim.calibrate_base_rate(ds, sim.BANK_BASE_COLUMNS, seed)
    return sim.make_potential_outcomes_synthetic(ds, tau, beta, seed)


@pytest.fixture(scope="session")
def truth_small():
    return synthetic_truth(4000, seed=3)


@pytest.fixture(scope="session")
def truth_40k():
    return synthetic_truth(40000, seed=1)


@pytest.fixture
def mixed_schema():
    return FeatureSchema((Column("x"), Column("c", "categorical", ("a", "b"))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_AC_LINES = []


@pytest.fixture
def ac_line():
    """Record the one-line verdict of an acceptance criterion."""
    def emit(tag, ok, text):
        line = f"{tag} {'PASS' if ok else 'FAIL'} {text}"
        _AC_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_AC_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
