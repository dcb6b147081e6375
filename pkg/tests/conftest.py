import numpy as np
import pytest

from fdrfusion.scene import TargetModel

# (criterion, passed, detail) lines printed after the run
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def table_target():
    """N=4 scenario of the G1 pmf tables."""
    return TargetModel(P0=3.0, d0=3.0, R=10.0)


@pytest.fixture(scope="session")
def design_target():
    """N=20 scenario used for design, ROC and the adaptive experiments."""
    return TargetModel(P0=5.0, d0=5.0, R=10.0)


@pytest.fixture(scope="session")
def large_target():
    """N=500 scenario of the asymptotic comparison."""
    return TargetModel(P0=15.0, d0=3.0, R=10.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
