"""Transformer regressor over the four element rows of an order plus a learned header row."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .thegcn import xavier

N_ELEMENTS = 4
SEQ_LEN = N_ELEMENTS + 1


def positional_encoding(n_pos: int, width: int) -> np.ndarray:
    """Sinusoidal table: sin on even channels, cos on odd ones."""
    pos = np.arange(n_pos)[:, None]
    pair = np.arange(width)[None, :] // 2
    angle = pos / np.power(10000.0, 2.0 * pair / width)
    return np.where(np.arange(width)[None, :] % 2 == 0, np.sin(angle), np.cos(angle))


def padded_width(widths, heads: int) -> int:
    w = max(widths)
    return -(-w // heads) * heads


def align_features(z: list, h: list | None, width: int) -> Tensor:
    """Rows [z_i || h_i] zero-padded to ``width`` and stacked into (batch, 4, width).

    Element order is retailer, origin, destination, payment slot; ``h`` may be
    None (raw-feature-only mode) or hold None for a missing embedding.
    """
    if len(z) != N_ELEMENTS or (h is not None and len(h) != N_ELEMENTS):
        raise ValueError(f"an order has {N_ELEMENTS} elements")
    rows = []
    for k in range(N_ELEMENTS):
        parts = [p for p in (z[k], None if h is None else h[k]) if p is not None]
        if not parts:
            raise ValueError(f"element {k} has neither raw features nor an embedding")
        parts = [ad.as_tensor(p) for p in parts]
        row = parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)
        extra = width - row.shape[1]
        if extra < 0:
            raise ad.ShapeError(f"element {k} is {row.shape[1]} wide, exceeds width {width}")
        if extra:
            row = ad.concat([row, np.zeros((row.shape[0], extra))], axis=1)
        rows.append(row)
    return ad.stack(rows, axis=1)


class EncoderBlock:
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, width: int, heads: int, ffn_mult: int, rng: np.random.Generator, name: str):
        if width % heads:
            raise ValueError(f"width {width} is not divisible by {heads} heads")
        self.width, self.heads = width, heads
        hidden = ffn_mult * width
        p = {}
        for k in ("q", "k", "v", "o"):
            p[f"W{k}"] = xavier(rng, width, width)
            p[f"b{k}"] = np.zeros(width)
        p["ln1_g"], p["ln1_b"] = np.ones(width), np.zeros(width)
        p["ln2_g"], p["ln2_b"] = np.ones(width), np.zeros(width)
        p["W1"], p["b1"] = xavier(rng, width, hidden), np.zeros(hidden)
        p["W2"], p["b2"] = xavier(rng, hidden, width), np.zeros(width)
        self.params = {f"{name}.{k}": Tensor(v, True) for k, v in p.items()}
        self._p = {k.rsplit(".", 1)[1]: v for k, v in self.params.items()}

    def attention(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Multi-head self-attention of normalized ``x``; returns (output, weights)."""
        p = self._p
        b, n, w = x.shape
        dk = w // self.heads

        def split(t):
            return ad.transpose(ad.reshape(t, (b, n, self.heads, dk)), (0, 2, 1, 3))

        q = split(x @ p["Wq"] + p["bq"])
        k = split(x @ p["Wk"] + p["bk"])
        v = split(x @ p["Wv"] + p["bv"])
        scores = (q @ ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dk))
        weights = ad.softmax(scores)
        ctx = ad.reshape(ad.transpose(weights @ v, (0, 2, 1, 3)), (b, n, w))
        return ctx @ p["Wo"] + p["bo"], weights

    def __call__(self, x: Tensor) -> Tensor:
        p = self._p
        att, _ = self.attention(ad.layer_norm(x) * p["ln1_g"] + p["ln1_b"])
        x = x + att
        hidden = ad.relu((ad.layer_norm(x) * p["ln2_g"] + p["ln2_b"]) @ p["W1"] + p["b1"])
        return x + hidden @ p["W2"] + p["b2"]


class ETAformer:
    """Header token from a seed vector through a one-hidden-layer MLP, sinusoidal
    positions, pre-norm encoder blocks, then LN and a linear head on the header row."""

    def __init__(self, width: int, heads: int = 4, depth: int = 2, ffn_mult: int = 2,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.width, self.heads, self.depth = width, heads, depth
        self.blocks = [EncoderBlock(width, heads, ffn_mult, rng, f"enc{i}") for i in range(depth)]
        head = {
            "header.seed": rng.normal(0.0, 1.0, width),
            "header.W1": xavier(rng, width, width), "header.b1": np.zeros(width),
            "header.W2": xavier(rng, width, width), "header.b2": np.zeros(width),
            "out.ln_g": np.ones(width), "out.ln_b": np.zeros(width),
            "out.W": xavier(rng, width, 1), "out.b": np.zeros(1),
        }
        self.params = {k: Tensor(v, True) for k, v in head.items()}
        for blk in self.blocks:
            self.params.update(blk.params)
        self.pos = positional_encoding(SEQ_LEN, width)

    def header_token(self) -> Tensor:
        p = self.params
        hidden = ad.tanh(ad.reshape(p["header.seed"], (1, self.width)) @ p["header.W1"] + p["header.b1"])
        return hidden @ p["header.W2"] + p["header.b2"]

    def encode(self, aligned: Tensor) -> Tensor:
        b = aligned.shape[0]
        header = ad.broadcast_to(ad.reshape(self.header_token(), (1, 1, self.width)), (b, 1, self.width))
        x = ad.concat([header, aligned], axis=1) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return x

    def __call__(self, aligned: Tensor) -> Tensor:
        """Predictions of shape (batch,) for an aligned batch of shape (batch, 4, width)."""
        if aligned.ndim != 3 or aligned.shape[1:] != (N_ELEMENTS, self.width):
            raise ad.ShapeError(f"expected (batch, {N_ELEMENTS}, {self.width}), got {aligned.shape}")
        p = self.params
        x = self.encode(aligned)
        head_row = x[:, 0, :]
        out = (ad.layer_norm(head_row) * p["out.ln_g"] + p["out.ln_b"]) @ p["out.W"] + p["out.b"]
        pred = ad.reshape(out, (aligned.shape[0],))
        if not np.all(np.isfinite(pred.data)):
            bad = int(np.sum(~np.isfinite(pred.data)))
            raise FloatingPointError(f"ETAformer produced {bad} non-finite predictions")
        return pred
