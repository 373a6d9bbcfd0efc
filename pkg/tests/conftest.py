import itertools

import numpy as np
import pytest

from digraph_flow.graph import DiGraph


def random_digraph(rng, n, p=0.3, X=1, E=2):
    e = np.where(rng.random((n, n)) < p, rng.integers(1, E, size=(n, n)), 0)
    np.fill_diagonal(e, 0)
    return DiGraph(rng.integers(0, X, size=n), e)


def brute_isomorphic(g1, g2):
    """Exhaustive search over all node bijections."""
    n = g1.num_nodes
    if n != g2.num_nodes:
        return False
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        if np.array_equal(g1.node_types, g2.node_types[p]) and np.array_equal(
            g1.edge_types, g2.edge_types[np.ix_(p, p)]
        ):
            return True
    return False


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
