import numpy as np
import pytest
from hypothesis import settings

from sptopo.data import WeightedGraph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_graph(rng, n_max=8, p=None, ties=False, allow_empty=True):
    n = int(rng.integers(1 if allow_empty else 2, n_max + 1))
    p = rng.uniform(0.2, 0.9) if p is None else p
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                w = float(rng.integers(1, 4)) if ties else float(rng.uniform(0.0, 10.0))
                edges.append((a, b, w))
    return WeightedGraph.from_edges(n, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
