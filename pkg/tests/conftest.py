import numpy as np
import pytest

from metric_lab.metric_core import MarkedMetricSpace, from_points

ACCEPTANCE_LINES: dict[int, str] = {}


def random_space(rng, n, n_boundary=None, kind="euclid"):
    """Random marked space: planar points or a random weighted-graph metric."""
    if n_boundary is None:
        n_boundary = int(rng.integers(1, n)) if n > 1 else 0
    flags = np.zeros(n, dtype=bool)
    flags[rng.choice(n, n_boundary, replace=False)] = True
    if kind == "euclid":
        return from_points(rng.random((n, 2)), flags)
    from scipy.sparse.csgraph import shortest_path

    W = rng.integers(1, 5, size=(n, n)).astype(float)
    W = np.triu(W, 1)
    W = W + W.T
    return MarkedMetricSpace(shortest_path(W, directed=False), flags)


def path_space(n, boundary=()):
    x = np.arange(n, dtype=float)
    flags = np.zeros(n, dtype=bool)
    flags[list(boundary)] = True
    return MarkedMetricSpace(np.abs(x[:, None] - x[None, :]), flags)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
