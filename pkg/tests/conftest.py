import numpy as np
import pytest
from hypothesis import strategies as st

from graphcf.graphs import SimpleGraph

ACCEPTANCE_LINES: list[str] = []


@st.composite
def simple_graphs(draw, min_n=1, max_n=8):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for j in range(1, n) for i in range(j)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return SimpleGraph(n, frozenset(p for p, keep in zip(pairs, mask) if keep))


@st.composite
def graph_pairs(draw, min_n=1, max_n=8):
    n = draw(st.integers(min_n, max_n))
    return draw(simple_graphs(n, n)), draw(simple_graphs(n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
