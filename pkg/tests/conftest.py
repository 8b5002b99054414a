import numpy as np
import pytest

from mapsearch.model import parse_network
from oracles import N1_TEXT

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def n1():
    return parse_network(N1_TEXT)


@pytest.fixture
def chain3():
    # binary chain A -> B -> C
    text = ("BAYES\n3\n2 2 2\n3\n1 0\n2 0 1\n2 1 2\n"
            "2 0.6 0.4\n4 0.9 0.1 0.3 0.7\n4 0.2 0.8 0.5 0.5\n")
    return parse_network(text)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_report():
    def record(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
