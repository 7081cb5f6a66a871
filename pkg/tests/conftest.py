import numpy as np
import pytest

from labeled_sbm import EnsembleParams, build_graph


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_graph(rng, n=30, m=60, p=2):
    """Simple graph with ``m`` distinct random pairs and uniform labels."""
    pairs = set()
    while len(pairs) < m:
        i, j = rng.integers(0, n, 2)
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    edges = [(i, j, int(rng.integers(1, p + 1))) for i, j in sorted(pairs)]
    return build_graph(n, edges, num_labels=p)


@pytest.fixture
def small_params():
    return EnsembleParams((3.0, 5.0), (0.1, 0.6))
