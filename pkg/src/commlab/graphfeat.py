"""Agent-interaction graph and neighbor-aggregated embeddings.

Vertices carry the agents' state attributes; edge weights are clamped
pairwise distances.  Embeddings start from the vertex attributes and are
refined by K synchronous rounds of inverse-distance-weighted neighbor
averaging, then concatenated onto the raw observations to form the
per-agent feature vectors consumed by the masking adversary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EMBED_DIM = 8
DEFAULT_MIN_WEIGHT = 1.0


@dataclass
class AgentGraph:
    attrs: np.ndarray        # (n, k) vertex attributes
    adjacency: np.ndarray    # (n, n) bool, no self-edges, symmetric
    weights: np.ndarray      # (n, n) positive where adjacent

    @property
    def n(self) -> int:
        return self.attrs.shape[0]

    def neighbors(self, v: int) -> list[int]:
        return [u for u in range(self.n) if self.adjacency[v, u]]


def build_graph(attrs: np.ndarray, distances: np.ndarray,
                radius: float | None = None,
                min_weight: float = DEFAULT_MIN_WEIGHT) -> AgentGraph:
    """Graph over agents with edges inside `radius` (None = fully connected).

    Edge weight is max(distance, min_weight) so the downstream 1/w term
    stays bounded when two agents share a cell.
    """
    attrs = np.asarray(attrs, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    n = attrs.shape[0]
    if n < 2:
        raise ValueError("graph needs at least 2 agents")
    if distances.shape != (n, n):
        raise ValueError("distance table shape mismatch")
    adjacency = np.ones((n, n), dtype=bool) if radius is None else distances <= radius
    np.fill_diagonal(adjacency, False)
    weights = np.maximum(distances, min_weight)
    return AgentGraph(attrs=attrs, adjacency=adjacency, weights=weights)


def init_embeddings(graph: AgentGraph, dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Level-0 table: vertex attributes zero-padded or truncated to `dim`."""
    n, k = graph.attrs.shape
    table = np.zeros((n, dim))
    width = min(k, dim)
    table[:, :width] = graph.attrs[:, :width]
    return table


def aggregate(graph: AgentGraph, table: np.ndarray, iterations: int) -> np.ndarray:
    """K synchronous rounds of e_v <- e_v + mean over neighbors of e_u / w(u,v).

    The mean over an empty neighbor set is the zero vector, so isolated
    vertices are fixpoints.
    """
    if iterations < 0:
        raise ValueError("iteration count must be non-negative")
    table = np.array(table, dtype=np.float64)
    for _ in range(iterations):
        nxt = table.copy()
        for v in range(graph.n):
            nbrs = np.flatnonzero(graph.adjacency[v])
            if nbrs.size:
                contrib = table[nbrs] / graph.weights[v, nbrs][:, None]
                nxt[v] = table[v] + contrib.mean(axis=0)
        table = nxt
    return table


def features(obs: list[np.ndarray], table: np.ndarray) -> list[np.ndarray]:
    """Per-agent feature vectors: observation first, embedding appended."""
    if len(obs) != table.shape[0]:
        raise ValueError("observation count and embedding table disagree")
    return [np.concatenate([np.asarray(o, dtype=np.float64), table[i]])
            for i, o in enumerate(obs)]
