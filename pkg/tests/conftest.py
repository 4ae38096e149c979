import numpy as np
import pytest

from lcm_secagg.network import FailureTable
from lcm_secagg.params import Params

# Receiver is client 0 throughout. Rows are clients, columns servers; the
# tables are built to match the narrated server behaviour of each scenario.
EX1 = dict(E=4, H=6, s=1, T_h=2, T_c=2, v=1)
EX1_TABLES = {
    "b": ["110111", "111011", "111111", "111111"],
    "c": ["110111", "011111", "101111", "111011"],
    "d": ["110111", "111011", "111011", "101111"],
}
EX1_LOADS = {"b": 2, "c": 6, "d": 4}

EX2 = dict(E=4, H=6, s=1, T_h=1, T_c=2, v=3)
EX2_TABLES = {
    "b": ["111111", "111011", "111111", "111111"],
    "c": ["110111", "011111", "111011", "101111"],
    "d": ["110111", "111011", "111110", "101111"],
}
EX2_LOADS = {"b": 2, "c": 3, "d": 2}


def table(rows):
    return FailureTable.from_string("\n".join(rows))


@pytest.fixture
def ex1():
    return Params(**EX1)


@pytest.fixture
def ex2():
    return Params(**EX2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
