"""Temporal heterogeneous GCN: weight-free bipartite propagation plus a GRU update per node type."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import BipartiteAdj
from .orders import NODE_TYPES


def xavier(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, (n_in, n_out))


class EmbeddingTable:
    """Per-type node embeddings: a trainable base plus a detached running offset.

    The value fed to propagation is ``base + offset``.  After each batch the
    GRU output of the batch's nodes is written back by moving the offset so
    that ``base + offset`` equals that output; the optimizer then moves
    ``base``.  Clearing the offset restores the purely learned table.
    """

    def __init__(self, base: dict[str, np.ndarray]):
        self.base = {t: Tensor(b, requires_grad=True, name=f"emb.{t}") for t, b in base.items()}
        self.offset = {t: np.zeros_like(b) for t, b in base.items()}

    @classmethod
    def xavier(cls, counts: dict[str, int], dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        return cls({t: xavier(rng, counts[t], dim) for t in NODE_TYPES})

    @property
    def dim(self) -> int:
        return next(iter(self.base.values())).shape[1]

    def rows(self, node_type: str) -> int:
        return self.base[node_type].shape[0]

    def h0(self) -> dict[str, Tensor]:
        return {t: ad.add(b, self.offset[t]) for t, b in self.base.items()}

    def values(self) -> dict[str, np.ndarray]:
        return {t: b.data + self.offset[t] for t, b in self.base.items()}

    def write_back(self, node_type: str, rows: np.ndarray, values: np.ndarray) -> None:
        self.offset[node_type][rows] = values - self.base[node_type].data[rows]

    def reset_state(self) -> None:
        for off in self.offset.values():
            off[:] = 0.0

    def grow(self, counts: dict[str, int]) -> "EmbeddingTable":
        """Copy padded with zero rows up to ``counts``; existing rows keep their indices."""
        base, offset = {}, {}
        for t, b in self.base.items():
            extra = counts[t] - b.shape[0]
            if extra < 0:
                raise ValueError(f"cannot shrink {t} embeddings from {b.shape[0]} to {counts[t]}")
            base[t] = np.vstack([b.data, np.zeros((extra, self.dim))])
            offset[t] = np.vstack([self.offset[t], np.zeros((extra, self.dim))])
        out = EmbeddingTable(base)
        out.offset = offset
        return out

    def copy(self) -> "EmbeddingTable":
        return self.grow({t: self.rows(t) for t in self.base})


class GRUCell:
    """h' = (1 - u) * h + u * c with update gate u, reset gate r, candidate c."""

    GATES = ("update", "reset", "cand")

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator, name: str = "gru",
                 update_bias: float = 0.0):
        self.in_dim, self.hidden = in_dim, hidden
        self.params: dict[str, Tensor] = {}
        for g in self.GATES:
            self.params[f"{name}.W_{g}"] = Tensor(xavier(rng, in_dim, hidden), True)
            self.params[f"{name}.U_{g}"] = Tensor(xavier(rng, hidden, hidden), True)
            bias = np.full(hidden, update_bias if g == "update" else 0.0)
            self.params[f"{name}.b_{g}"] = Tensor(bias, True)
        self._p = {k.rsplit(".", 1)[1]: v for k, v in self.params.items()}

    def __call__(self, h: Tensor, z) -> Tensor:
        z = ad.as_tensor(z)
        if z.shape[-1] != self.in_dim:
            raise ad.ShapeError(f"GRU expects {self.in_dim} input features, got {z.shape[-1]}")
        p = self._p
        u = ad.sigmoid(z @ p["W_update"] + h @ p["U_update"] + p["b_update"])
        r = ad.sigmoid(z @ p["W_reset"] + h @ p["U_reset"] + p["b_reset"])
        c = ad.tanh(z @ p["W_cand"] + (r * h) @ p["U_cand"] + p["b_cand"])
        return h + u * (c - h)


# ---------------------------------------------------------------------- propagation

def propagate_layer(adj: BipartiteAdj, h: Tensor) -> Tensor:
    """One bipartite propagation step: normalized adjacency times embeddings, nothing else."""
    if adj.normalized is None:
        raise ValueError("adjacency has not been normalized")
    if h.shape[0] != adj.size:
        raise ad.ShapeError(f"embeddings have {h.shape[0]} rows, subgraph has {adj.size} nodes")
    return ad.spmm(adj.normalized, h)


def aggregate_types(slices: list[Tensor], previous: Tensor) -> Tensor:
    """Sum of the per-subgraph slices of one type; with no subgraph, ``previous`` passes through."""
    if not slices:
        return previous
    out = slices[0]
    for s in slices[1:]:
        if s.shape != out.shape:
            raise ad.ShapeError(f"slice shapes {out.shape} and {s.shape} differ")
        out = out + s
    return out


def aggregate_layers(layers: list[Tensor]) -> Tensor:
    out = layers[0]
    for h in layers[1:]:
        out = out + h
    return out * (1.0 / len(layers)) if len(layers) > 1 else out


def propagate(blocks: list[BipartiteAdj], h0: dict[str, Tensor], layers: int) -> dict[str, Tensor]:
    """Layer-wise bipartite propagation, per-layer sum over subgraphs, mean over layers 0..L."""
    history = {t: [h] for t, h in h0.items()}
    current = dict(h0)
    for _ in range(layers):
        parts: dict[str, list[Tensor]] = {t: [] for t in current}
        for adj in blocks:
            i, j = adj.types
            out = propagate_layer(adj, ad.concat([current[i], current[j]], axis=0))
            parts[i].append(out[: adj.n_i])
            parts[j].append(out[adj.n_i:])
        current = {t: aggregate_types(parts[t], current[t]) for t in current}
        for t, h in current.items():
            history[t].append(h)
    return {t: aggregate_layers(hs) for t, hs in history.items()}


def gru_update(h_prev: Tensor, z, rows: np.ndarray, cell: GRUCell) -> Tensor:
    """Apply the GRU to ``rows`` (nodes present in the batch); other rows pass through."""
    rows = np.asarray(rows, dtype=np.intp)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (len(rows), cell.in_dim):
        raise ad.ShapeError(f"features {z.shape} do not match {len(rows)} rows x {cell.in_dim} width")
    new = cell(ad.take_rows(h_prev, rows), z)
    return ad.set_rows(h_prev, rows, new)


@dataclass
class BatchNodes:
    """Nodes of one type touched by a batch and their raw features at the batch's slot."""

    rows: np.ndarray
    features: np.ndarray


def thegcn_forward(blocks: list[BipartiteAdj], h0: dict[str, Tensor], batch: dict[str, BatchNodes],
                   grus: dict[str, GRUCell], layers: int) -> dict[str, Tensor]:
    if layers < 1:
        raise ValueError("THEGCN needs at least one propagation layer")
    h_prev = propagate(blocks, h0, layers)
    return {t: gru_update(h_prev[t], batch[t].features, batch[t].rows, grus[t]) for t in h_prev}
