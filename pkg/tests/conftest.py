import numpy as np
import pytest

from mlbest import graph

ACCEPTANCE_LINES = []


def random_connected_laplacian(rng, M, extra=None, weight_range=(0.5, 2.0)):
    """Random spanning tree plus a few extra edges, uniform weights."""
    order = rng.permutation(M)
    edges = set()
    for i in range(1, M):
        a, b = order[i], order[rng.integers(i)]
        edges.add((min(a, b), max(a, b)))
    extra = M // 2 if extra is None else extra
    for _ in range(extra):
        a, b = rng.choice(M, size=2, replace=False)
        edges.add((min(a, b), max(a, b)))
    w = rng.uniform(*weight_range, size=len(edges))
    g = graph.WeightedGraph(M, tuple((a + 1, b + 1, x) for (a, b), x in zip(sorted(edges), w)))
    return graph.laplacian_from_graph(g)


def random_spd(rng, n, floor=0.1):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + floor * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ieee14_lp():
    return graph.laplacian_from_graph(graph.ieee14())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
