import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cuspwind.group import load_shipped  # noqa: E402

# exponents of convergence from the transfer-operator oracle (K=40 nodes, N=400 powers)
ORACLE_DELTA = {"two_cusp": 0.674652, "cusp_hyp": 0.695251}


@pytest.fixture(scope="session")
def single_cusp():
    return load_shipped("single_cusp")


@pytest.fixture(scope="session")
def two_cusp():
    return load_shipped("two_cusp")


@pytest.fixture(scope="session")
def cusp_hyp():
    return load_shipped("cusp_hyp")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
