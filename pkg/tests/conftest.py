from __future__ import annotations

from pathlib import Path

import pytest

from prxq.pi_index import build_indexes
from prxq.prxml import parse_prxml

FIXTURES = Path(__file__).parent / "fixtures"

# criterion lines collected by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def load_fixture(name: str):
    return parse_prxml((FIXTURES / name).read_bytes())


@pytest.fixture(scope="session")
def fig1():
    return load_fixture("fig1.xml")


@pytest.fixture(scope="session")
def fig2():
    return load_fixture("fig2.xml")


@pytest.fixture(scope="session")
def fig1_indexes(fig1):
    return build_indexes(fig1)


@pytest.fixture(scope="session")
def fig2_indexes(fig2):
    return build_indexes(fig2)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
