import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nlfem import build_squared_grid, build_uniform_grid  # noqa: E402

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def uniform10():
    return build_uniform_grid(10, 0.1)


@pytest.fixture(scope="session")
def uniform20():
    return build_uniform_grid(20, 0.1)


@pytest.fixture(scope="session")
def squared10():
    return build_squared_grid(10, 0.1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
