import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from walkgrid.synthetic import write_city  # noqa: E402

# Filled by test_acceptance; printed once at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_city(tmp_path_factory):
    """40 x 40 synthetic city; returns the config path."""
    d = tmp_path_factory.mktemp("city40")
    return write_city(d, size=40, seed=3, lattice_n=20, spacing=150.0)
