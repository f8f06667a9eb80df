"""Heterogeneous order graph, its bipartite blocks, and the self-loop renormalization.

Each order (r, o, d, t) links only adjacent elements of the chain
r - o - d - t, i.e. three undirected edges.  Edges are kept as a simple
graph: repeated co-occurrence does not add weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .orders import DESTINATION, NODE_TYPES, ORIGIN, RETAILER, SLOT, Dataset

CHAIN = ((RETAILER, ORIGIN), (ORIGIN, DESTINATION), (DESTINATION, SLOT))


@dataclass
class NodeRegistry:
    """External identifier -> dense index, separately for every node type."""

    ids: dict[str, list] = field(default_factory=lambda: {t: [] for t in NODE_TYPES})
    index: dict[str, dict] = field(default_factory=lambda: {t: {} for t in NODE_TYPES})

    def count(self, node_type: str) -> int:
        return len(self.ids[node_type])

    def counts(self) -> dict[str, int]:
        return {t: len(self.ids[t]) for t in NODE_TYPES}

    def add(self, node_type: str, values: Iterable[Hashable]) -> np.ndarray:
        """Intern ``values`` (appending unseen ones) and return their indices."""
        table, ids = self.index[node_type], self.ids[node_type]
        out = []
        for v in values:
            i = table.get(v)
            if i is None:
                i = table[v] = len(ids)
                ids.append(v)
            out.append(i)
        return np.asarray(out, dtype=np.int64)

    def lookup(self, node_type: str, values: Iterable[Hashable]) -> np.ndarray:
        table = self.index[node_type]
        return np.fromiter((table.get(v, -1) for v in values), dtype=np.int64)

    def copy(self) -> "NodeRegistry":
        return NodeRegistry({t: list(v) for t, v in self.ids.items()},
                            {t: dict(v) for t, v in self.index.items()})


def _element_ids(orders) -> dict[str, np.ndarray]:
    if isinstance(orders, Dataset):
        return {t: orders.element_ids(t) for t in NODE_TYPES}
    rows = list(orders)
    cols = list(zip(*rows)) if rows else [()] * 4
    return {t: np.asarray(c, dtype=object) for t, c in zip(NODE_TYPES, cols)}


@dataclass
class HeteroGraph:
    registry: NodeRegistry
    edges: dict[tuple[str, str], np.ndarray]

    def num_edges(self) -> int:
        return sum(len(e) for e in self.edges.values())

    def num_nodes(self) -> int:
        return sum(self.registry.counts().values())


def _merge_edges(graph_edges, registry: NodeRegistry, ids: dict[str, np.ndarray]):
    idx = {t: registry.add(t, ids[t]) for t in NODE_TYPES}
    merged = {}
    for a, b in CHAIN:
        new = np.column_stack([idx[a], idx[b]]) if len(idx[a]) else np.zeros((0, 2), np.int64)
        old = graph_edges.get((a, b), np.zeros((0, 2), np.int64))
        both = np.concatenate([old, new]).astype(np.int64)
        merged[(a, b)] = np.unique(both, axis=0) if len(both) else both.reshape(0, 2)
    return merged


def build_graph(orders) -> HeteroGraph:
    """Chain edges r-o, o-d, d-t for every order; ``orders`` is a Dataset or (r, o, d, t) tuples."""
    ids = _element_ids(orders)
    registry = NodeRegistry()
    return HeteroGraph(registry, _merge_edges({}, registry, ids))


def extend_for_inference(graph: HeteroGraph, orders, add_edges: bool = True) -> HeteroGraph:
    """New graph whose registry appends unseen elements; existing indices are untouched.

    With ``add_edges=False`` the new nodes are registered but stay isolated,
    which keeps the adjacency of the original graph.
    """
    ids = _element_ids(orders)
    registry = graph.registry.copy()
    if add_edges:
        return HeteroGraph(registry, _merge_edges(graph.edges, registry, ids))
    for t in NODE_TYPES:
        registry.add(t, ids[t])
    return HeteroGraph(registry, {k: v.copy() for k, v in graph.edges.items()})


@dataclass
class BipartiteAdj:
    """Block adjacency [[0, R], [R^T, 0]] over the N_i + N_j nodes of two types.

    ``normalized`` holds D^-1/2 (A + I) D^-1/2 once :func:`normalize` has run;
    ``degree`` is the diagonal of D, i.e. 1 + node degree.
    """

    types: tuple[str, str]
    n_i: int
    n_j: int
    adjacency: sp.csr_matrix
    degree: np.ndarray | None = None
    normalized: sp.csr_matrix | None = None

    @property
    def size(self) -> int:
        return self.n_i + self.n_j


def extract_bipartite(graph: HeteroGraph, i: str, j: str) -> BipartiteAdj | None:
    """Subgraph of the edges between types ``i`` and ``j``; ``None`` when it has no edges."""
    if i == j:
        raise ValueError(f"bipartite subgraph needs two distinct types, got {i!r} twice")
    for t in (i, j):
        if t not in NODE_TYPES:
            raise KeyError(f"unknown node type {t!r}")
    if (i, j) in graph.edges:
        e = graph.edges[(i, j)]
    elif (j, i) in graph.edges:
        e = graph.edges[(j, i)][:, ::-1]
    else:
        return None
    if len(e) == 0:
        return None
    n_i, n_j = graph.registry.count(i), graph.registry.count(j)
    rows = np.concatenate([e[:, 0], n_i + e[:, 1]])
    cols = np.concatenate([n_i + e[:, 1], e[:, 0]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_i + n_j,) * 2)
    return BipartiteAdj((i, j), n_i, n_j, adj)


def renormalize(adj: sp.spmatrix) -> tuple[sp.csr_matrix, np.ndarray]:
    """D^-1/2 (A + I) D^-1/2 with d_u = 1 + sum_v a_uv; rejects asymmetric ``adj``."""
    adj = sp.csr_matrix(adj, dtype=np.float64)
    if adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got {adj.shape}")
    if (abs(adj - adj.T) > 0).nnz:
        raise ValueError("adjacency is not symmetric")
    if adj.diagonal().any():
        raise ValueError("adjacency must have a zero diagonal")
    a_hat = (adj + sp.identity(adj.shape[0], format="csr")).tocsr()
    a_hat.sort_indices()
    degree = np.asarray(a_hat.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(a_hat.shape[0]), np.diff(a_hat.indptr))
    # one rounding per entry: a_uv / sqrt(d_u * d_v) is exactly symmetric
    data = a_hat.data / np.sqrt(degree[rows] * degree[a_hat.indices])
    norm = sp.csr_matrix((data, a_hat.indices.copy(), a_hat.indptr.copy()), shape=a_hat.shape)
    return norm, degree


def normalize(adj: BipartiteAdj) -> BipartiteAdj:
    norm, degree = renormalize(adj.adjacency)
    return BipartiteAdj(adj.types, adj.n_i, adj.n_j, adj.adjacency, degree, norm)


def normalized_blocks(graph: HeteroGraph) -> list[BipartiteAdj]:
    """Normalized adjacency of every non-empty type pair (at most C(4, 2) = 6)."""
    out = []
    for a in range(len(NODE_TYPES)):
        for b in range(a + 1, len(NODE_TYPES)):
            adj = extract_bipartite(graph, NODE_TYPES[a], NODE_TYPES[b])
            if adj is not None:
                out.append(normalize(adj))
    return out


def export_edges(graph: HeteroGraph, dest: str | Path | TextIO) -> None:
    """Write one ``type_i:idx<TAB>type_j:idx`` line per undirected edge."""
    lines = [f"{a}:{u}\t{b}:{v}\n" for (a, b), e in graph.edges.items() for u, v in e]
    if isinstance(dest, (str, Path)):
        Path(dest).write_text("".join(lines))
    else:
        dest.writelines(lines)
