"""Fully connected content graph over an article's sentence and image nodes.

Every ordered pair of distinct nodes carries a directed edge, so an
article with N nodes has N(N-1) of them. Edge weights live in a dense
N x N matrix indexed (source row, target column); they start at 1 and are
replaced by inferred weights during denoising.
"""

from dataclasses import dataclass

import numpy as np

from .embedding import ArticleFeatures


@dataclass(frozen=True)
class ContentGraph:
    n: int
    x_node: np.ndarray       # (N, d)
    adjacency: np.ndarray    # (N, N) 0/1, zero diagonal
    edge_weights: np.ndarray  # (N, N) in [0, 1], masked by adjacency

    @property
    def directed_edge_count(self) -> int:
        return self.n * (self.n - 1)

    def with_edge_weights(self, weights: np.ndarray) -> "ContentGraph":
        return ContentGraph(self.n, self.x_node, self.adjacency, weights * self.adjacency)


def build_graph(features: ArticleFeatures) -> ContentGraph:
    """All off-diagonal edges present with weight 1; no self-edges."""
    n = features.n
    if n < 1:
        raise ValueError("graph needs at least one node")
    adjacency = np.ones((n, n)) - np.eye(n)
    return ContentGraph(n, features.x_node.copy(), adjacency, adjacency.copy())
