import pathlib

import numpy as np
import pytest
from hypothesis import strategies as st

from consensus_delay.graph import Topology, parse_topology

DATA = pathlib.Path(__file__).resolve().parents[1] / "demos" / "data"

HUB6_TEXT = "6\n1 2\n1 4\n2 4\n3 4\n4 5\n3 6\n5 6"
RING6_TEXT = "6\n1 2\n2 3\n3 4\n4 5\n5 6\n1 6"

# criterion number -> (title, [(passed, detail), ...]); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def hub6():
    return parse_topology(HUB6_TEXT)


@pytest.fixture
def ring6():
    return parse_topology(RING6_TEXT)


@pytest.fixture
def k2_graph():
    return parse_topology("2\n1 2")


def star(n):
    return Topology.from_edges(n, [(1, j) for j in range(2, n + 1)])


@st.composite
def connected_topologies(draw, min_n=2, max_n=12):
    """Random spanning tree plus random extra edges."""
    n = draw(st.integers(min_n, max_n))
    edges = {(draw(st.integers(1, i - 1)), i) for i in range(2, n + 1)}
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    extra = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges |= {p for p, keep in zip(pairs, extra) if keep}
    return Topology.from_edges(n, edges)


def seeded_connected_graphs(count, seed, n_range=(2, 12)):
    from consensus_delay.verify import random_connected_topology

    rng = np.random.default_rng(seed)
    return [random_connected_topology(int(rng.integers(n_range[0], n_range[1] + 1)), rng) for _ in range(count)]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[num]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        details = "; ".join(detail for _, detail in parts)
        terminalreporter.write_line(f"[{status}] {num}. {title}: {details}")
