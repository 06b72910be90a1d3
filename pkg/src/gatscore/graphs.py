"""Sparse token graphs built from dependency relations, plus mini-batching.

Graphs are undirected with explicit self-loops: every dep (h, d) with h >= 0
contributes both (h, d) and (d, h), and every node carries (i, i). Edges are
COO pairs, deduplicated and lexicographically sorted. Self-loops keep each
node's own features inside its attention neighborhood and make single-node
sentences well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmbeddingBundle, EssayRecord


@dataclass(frozen=True, eq=False)
class TokenGraph:
    """Undirected self-looped token graph with node features.

    ``edges`` is an (E, 2) int64 array of (src, dst) pairs; messages flow
    src -> dst and attention is normalized over each dst neighborhood.
    """

    num_nodes: int
    edges: np.ndarray
    node_features: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.node_features, dtype=np.float64)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "node_features", feats)
        n = self.num_nodes
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"node_features shape {feats.shape} does not match {n} nodes")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge index out of range")
        if len(np.unique(edges, axis=0)) != len(edges):
            raise ValueError("duplicate edges")
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        if not np.array_equal(order, np.arange(len(edges))):
            raise ValueError("edges are not lexicographically sorted")
        as_set = {(int(s), int(d)) for s, d in edges}
        if any((d, s) not in as_set for s, d in as_set):
            raise ValueError("edge set is not symmetric")
        if any((i, i) not in as_set for i in range(n)):
            raise ValueError("missing self-loops")

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]


def build_graph(record: EssayRecord, bundle: EmbeddingBundle) -> TokenGraph:
    """Turn a validated record/bundle pair into its undirected token graph."""
    n = record.num_tokens
    pairs = {(i, i) for i in range(n)}
    for head, dep in record.deps:
        if head >= 0:
            pairs.add((head, dep))
            pairs.add((dep, head))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return TokenGraph(num_nodes=n, edges=edges, node_features=bundle.token_matrix)


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several token graphs merged into one block-diagonal graph.

    ``segment_ids[v]`` is the source graph of node v; ``offsets[g]`` is the
    node-index shift applied to graph g.
    """

    graph: TokenGraph
    segment_ids: np.ndarray
    offsets: np.ndarray
    sizes: np.ndarray

    @property
    def num_graphs(self) -> int:
        return int(self.sizes.shape[0])


def batch_graphs(graphs: list[TokenGraph]) -> GraphBatch:
    """Merge graphs by shifting node indices; features are stacked vertically."""
    if not graphs:
        raise ValueError("cannot batch an empty list of graphs")
    dim = graphs[0].feature_dim
    for g in graphs:
        if g.feature_dim != dim:
            raise ValueError(f"feature dim mismatch: {g.feature_dim} != {dim}")

    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    segment_ids = np.repeat(np.arange(len(graphs), dtype=np.int64), sizes)

    # Concatenating per-graph sorted edge lists with increasing offsets keeps
    # the merged list lexicographically sorted.
    edges = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)], axis=0)
    features = np.concatenate([g.node_features for g in graphs], axis=0)
    merged = TokenGraph(num_nodes=int(sizes.sum()), edges=edges, node_features=features)
    return GraphBatch(graph=merged, segment_ids=segment_ids, offsets=offsets, sizes=sizes)


def unbatch_graphs(batch: GraphBatch) -> list[TokenGraph]:
    """Recover the original graphs (exact edge sets and features)."""
    out = []
    for g in range(batch.num_graphs):
        lo = int(batch.offsets[g])
        hi = lo + int(batch.sizes[g])
        mask = (batch.graph.src >= lo) & (batch.graph.src < hi)
        edges = batch.graph.edges[mask] - lo
        feats = batch.graph.node_features[lo:hi]
        out.append(TokenGraph(num_nodes=hi - lo, edges=edges, node_features=feats))
    return out
