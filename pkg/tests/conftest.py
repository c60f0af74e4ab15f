import numpy as np
import pytest

from rcc.graphdata import AdjacencyStructure, AttributedGraph
from rcc.localclf import ParamMatrix


def random_adjacency(n, p, rng):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return AdjacencyStructure.from_edges(n, np.argwhere(upper))


def random_graph(n, d, k, p=0.3, seed=0):
    rng = np.random.default_rng(seed)
    return AttributedGraph(random_adjacency(n, p, rng), rng.normal(size=(n, d)),
                           rng.integers(0, k, size=n), k)


def random_params(d, k, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return ParamMatrix(rng.normal(0.0, scale, (d + 1 + k, k)), d, k)


def central_diff(fn, x, step=1e-6):
    """Jacobian of fn at x by central differences; rows = outputs, cols = inputs."""
    x = np.asarray(x, dtype=float)
    cols = []
    for idx in range(x.size):
        e = np.zeros(x.size)
        e[idx] = step
        plus = np.ravel(fn((x.ravel() + e).reshape(x.shape)))
        minus = np.ravel(fn((x.ravel() - e).reshape(x.shape)))
        cols.append((plus - minus) / (2 * step))
    return np.stack(cols, axis=1)


@pytest.fixture
def path5():
    adj = AdjacencyStructure.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    return AttributedGraph(adj, np.arange(10.0).reshape(5, 2), [0, 0, 1, 1, 1], 2)
