"""Small synthetic graphs for demos and tests.

The citation benchmarks are not bundled; :func:`planted_partition` gives a
Cora-like stand-in: community structure plus sparse binary features that
correlate with the communities.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph

__all__ = ["erdos_renyi", "path_graph", "planted_partition", "star_graph"]


def erdos_renyi(n: int, p: float, seed: int = 0, features: np.ndarray | None = None) -> Graph:
    rng = np.random.default_rng(seed)
    u, v = np.triu_indices(n, k=1)
    keep = rng.random(u.size) < p
    return Graph.from_edges(n, np.column_stack([u[keep], v[keep]]), features)


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    """Center node 0 joined to ``leaves`` leaf nodes."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def planted_partition(n: int = 300, n_classes: int = 5, p_in: float = 0.06, p_out: float = 0.004,
                      m: int = 200, words_per_node: int = 12, topic_purity: float = 0.7,
                      seed: int = 0) -> Graph:
    """Stochastic block model with bag-of-words style binary features.

    Each class owns a block of ``m // n_classes`` feature columns; a node
    draws ``words_per_node`` active features, each from its own block with
    probability ``topic_purity`` and uniformly otherwise.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    u, v = np.triu_indices(n, k=1)
    prob = np.where(labels[u] == labels[v], p_in, p_out)
    keep = rng.random(u.size) < prob
    block = m // n_classes
    x = np.zeros((n, m))
    for i in range(n):
        own = rng.random(words_per_node) < topic_purity
        cols = np.where(
            own,
            labels[i] * block + rng.integers(0, block, size=words_per_node),
            rng.integers(0, m, size=words_per_node),
        )
        x[i, cols] = 1.0
    return Graph.from_edges(n, np.column_stack([u[keep], v[keep]]), x)
