"""Shared fixtures: the hand-checkable toy graph used across the suite.

Toy graph (4 users, 5 items, 10 edges), 0-indexed:

    u0: i0 i1 i3
    u1: i1
    u2: i2 i4
    u3: i1 i2 i3 i4

User degrees (3, 1, 2, 4); item degrees (1, 3, 2, 2, 2). Oracle values
derived by hand from this edge list appear inline in the tests.
"""

import numpy as np
import pytest

from gcfbench import graph, ingest

TOY_EDGES = [
    (0, 0), (0, 1), (0, 3),
    (1, 1),
    (2, 2), (2, 4),
    (3, 1), (3, 2), (3, 3), (3, 4),
]


@pytest.fixture
def toy_set() -> ingest.InteractionSet:
    return ingest.from_pairs(TOY_EDGES)


@pytest.fixture
def toy_R(toy_set):
    return graph.build_interaction_matrix(toy_set)


def random_bipartite(rng, max_users=15, max_items=15):
    """A random interaction set where every user and item has >= 1 edge."""
    n_u = int(rng.integers(2, max_users + 1))
    n_i = int(rng.integers(2, max_items + 1))
    pairs = set()
    for u in range(n_u):
        k = int(rng.integers(1, n_i + 1))
        for i in rng.choice(n_i, size=k, replace=False):
            pairs.add((u, int(i)))
    for i in range(n_i):
        if not any(p[1] == i for p in pairs):
            pairs.add((int(rng.integers(0, n_u)), i))
    return ingest.from_pairs(sorted(pairs))
