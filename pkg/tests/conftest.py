import sys
import os

import numpy as np
import pytest

# Ensure project root and src/ are on sys.path so tests can import local packages
ROOT = os.path.dirname(os.path.dirname(__file__))
SRC = os.path.join(ROOT, 'src')

for p in (ROOT, SRC):
    if p and p not in sys.path:
        sys.path.insert(0, p)

from src.models.prufer import PruferString  # noqa: E402
from src.models.tree import EdgeSet, LabeledTree  # noqa: E402


def forward_decode(string: PruferString) -> LabeledTree:
    """Classical decoder: join the smallest vertex of degree one to each entry in turn."""
    n = string.n
    degree = [1] * (n + 1)
    for p in string.entries:
        degree[p] += 1
    edges = []
    for p in string.entries:
        leaf = next(v for v in range(1, n + 1) if degree[v] == 1)
        edges.append((leaf, p))
        degree[leaf] -= 1
        degree[p] -= 1
    u, v = [w for w in range(1, n + 1) if degree[w] == 1]
    edges.append((u, v))
    return LabeledTree(n, tuple(edges))


def brute_distance(string: PruferString, mutant: PruferString) -> int:
    """Distance of two strings through the forward decoder and plain edge sets."""
    a = EdgeSet.from_pairs(forward_decode(string).edges)
    b = EdgeSet.from_pairs(forward_decode(mutant).edges)
    return string.n - 1 - len(a & b)


@pytest.fixture
def worked_example():
    """The string (4, 3, 2, 2, 7) on 7 vertices."""
    return PruferString(7, (4, 3, 2, 2, 7))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
