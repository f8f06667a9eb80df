"""Chronological mini-batch training of the full model and its two ablations.

Each batch: propagate the embedding table over the training graph, GRU-update
the batch's nodes, predict with the transformer (or the linear ablation head),
take the MAE, back-propagate, write the GRU outputs back into the table state,
and step Adam.  Validation runs after every epoch; the best epoch is kept.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, AdamState, Tensor
from .etaformer import ETAformer, align_features, padded_width
from .evaluation import mae, mape, mare
from .graph import HeteroGraph, NodeRegistry, build_graph, extend_for_inference, normalized_blocks
from .orders import NODE_TYPES, SLOT, Dataset, SplitSpec, chronological_split
from .thegcn import BatchNodes, EmbeddingTable, GRUCell, thegcn_forward, xavier

log = logging.getLogger(__name__)

MODES = ("full", "thegcn_only", "etaformer_only")
GRID_LAYERS = (1, 2, 3, 4, 5)
GRID_DIMS = (16, 32, 64, 128, 256)
# Opening the GRU update gate at init keeps the written-back state near the
# tanh-bounded candidate; with a closed gate the summed propagation of
# multi-subgraph types compounds from batch to batch.
GRU_UPDATE_BIAS = 2.0


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, checkpoint: "Checkpoint | None"):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class TrainConfig:
    layers: int = 2
    dim: int = 32
    batch_size: int = 8192
    eval_batch_size: int = 0
    lr: float = 1e-3
    max_epochs: int = 1000
    patience: int = 100
    max_steps: int = 0
    seed: int = 0
    mode: str = "full"
    heads: int = 4
    depth: int = 2
    ffn_mult: int = 2
    val_days: int = 10
    test_days: int = 15

    def validate(self, grid: bool = False) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.layers < 1 or self.dim < 1:
            raise ValueError("layers and dim must be positive")
        if grid and (self.layers not in GRID_LAYERS or self.dim not in GRID_DIMS):
            raise ValueError(f"grid cells need L in {GRID_LAYERS} and D in {GRID_DIMS}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(self.val_days, self.test_days)


def mae_loss(y, pred: Tensor) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("MAE loss over an empty batch")
    if y.shape != pred.shape:
        raise ad.ShapeError(f"labels {y.shape} vs predictions {pred.shape}")
    return ad.mean(ad.tabs(pred - y))


class LinearHead:
    """Single affine layer on the concatenated element embeddings (THEGCN-only ablation)."""

    def __init__(self, in_dim: int, rng: np.random.Generator):
        self.params = {"head.W": Tensor(xavier(rng, in_dim, 1), True), "head.b": Tensor(np.zeros(1), True)}

    def __call__(self, embeddings: list[Tensor]) -> Tensor:
        x = ad.concat(embeddings, axis=1)
        out = x @ self.params["head.W"] + self.params["head.b"]
        return ad.reshape(out, (x.shape[0],))


# ---------------------------------------------------------------------- batching

@dataclass
class Batch:
    y: np.ndarray
    first_ts: int
    z: dict[str, np.ndarray]
    nodes: dict[str, BatchNodes]
    inverse: dict[str, np.ndarray]


@dataclass
class FeatureScaler:
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]

    @classmethod
    def fit(cls, ds: Dataset) -> "FeatureScaler":
        mean, std = {}, {}
        for t in NODE_TYPES:
            f = ds.order_features(t)
            mean[t] = f.mean(axis=0) if len(f) else np.zeros(f.shape[1])
            s = f.std(axis=0) if len(f) else np.ones(f.shape[1])
            std[t] = np.where(s > 1e-8, s, 1.0)
        return cls(mean, std)

    def __call__(self, t: str, f: np.ndarray) -> np.ndarray:
        return (f - self.mean[t]) / self.std[t]


def make_batches(ds: Dataset, registry: NodeRegistry, scaler: FeatureScaler, batch_size: int) -> list[Batch]:
    """Consecutive chronological batches; the last short batch is kept."""
    index = {t: registry.lookup(t, ds.element_ids(t)) for t in NODE_TYPES}
    for t, ix in index.items():
        if np.any(ix < 0):
            raise KeyError(f"{t} elements missing from the graph registry")
    reg_codes = {t: ds.store.codes_for(t, registry.ids[t]) for t in NODE_TYPES}
    z_all = {t: scaler(t, ds.order_features(t)) for t in NODE_TYPES}
    batches = []
    for lo in range(0, len(ds), batch_size):
        sl = slice(lo, min(lo + batch_size, len(ds)))
        slot = int(ds.slots[lo])
        nodes, inverse = {}, {}
        for t in NODE_TYPES:
            rows, inv = np.unique(index[t][sl], return_inverse=True)
            codes = reg_codes[t][rows]
            if t == SLOT:
                raw = ds.store.features(t, np.full(len(rows), -1), slot)
                hours = np.asarray([registry.ids[t][r] for r in rows], dtype=np.int64)
                raw[np.arange(len(rows)), hours % 24] = 1.0
            else:
                raw = ds.store.features(t, codes, slot)
            nodes[t] = BatchNodes(rows, scaler(t, raw))
            inverse[t] = inv
        batches.append(Batch(ds.hours[sl].copy(), int(ds.payment_ts[lo]),
                             {t: z_all[t][sl] for t in NODE_TYPES}, nodes, inverse))
    return batches


# ---------------------------------------------------------------------- model

class IGTModel:
    """Parameters and forward pass for one of the three modes."""

    def __init__(self, config: TrainConfig, schema_widths: dict[str, int], counts: dict[str, int],
                 rng: np.random.Generator):
        self.config = config
        self.widths = schema_widths
        self.y_offset, self.y_scale = 0.0, 1.0
        self.table: EmbeddingTable | None = None
        self.grus: dict[str, GRUCell] = {}
        self.former: ETAformer | None = None
        self.head: LinearHead | None = None
        d = config.dim
        if config.mode in ("full", "thegcn_only"):
            self.table = EmbeddingTable.xavier(counts, d, rng)
            self.grus = {t: GRUCell(schema_widths[t], d, rng, name=f"gru.{t}", update_bias=GRU_UPDATE_BIAS) for t in NODE_TYPES}
        if config.mode == "full":
            width = padded_width([schema_widths[t] + d for t in NODE_TYPES], config.heads)
            self.former = ETAformer(width, config.heads, config.depth, config.ffn_mult, rng)
        elif config.mode == "etaformer_only":
            width = padded_width([schema_widths[t] for t in NODE_TYPES], config.heads)
            self.former = ETAformer(width, config.heads, config.depth, config.ffn_mult, rng)
        else:
            self.head = LinearHead(len(NODE_TYPES) * d, rng)

    @property
    def uses_graph(self) -> bool:
        return self.table is not None

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.table is not None:
            out.update({f"emb.{t}": b for t, b in self.table.base.items()})
        for g in self.grus.values():
            out.update(g.params)
        if self.former is not None:
            out.update({f"former.{k}": v for k, v in self.former.params.items()})
        if self.head is not None:
            out.update(self.head.params)
        return out

    def forward(self, batch: Batch, blocks, table: EmbeddingTable | None):
        """Predicted hours for the batch, plus the GRU outputs per type (None without a graph)."""
        h_t = None
        h_orders = None
        if self.uses_graph:
            h_t = thegcn_forward(blocks, table.h0(), batch.nodes, self.grus, self.config.layers)
            h_orders = [ad.take_rows(h_t[t], batch.nodes[t].rows[batch.inverse[t]]) for t in NODE_TYPES]
        z = [batch.z[t] for t in NODE_TYPES]
        if self.config.mode == "thegcn_only":
            raw = self.head(h_orders)
        else:
            raw = self.former(align_features(z, h_orders, self.former.width))
        return raw * self.y_scale + self.y_offset, h_t

    @staticmethod
    def write_back(table: EmbeddingTable, batch: Batch, h_t: dict[str, Tensor]) -> None:
        for t in NODE_TYPES:
            rows = batch.nodes[t].rows
            table.write_back(t, rows, h_t[t].data[rows])


# ---------------------------------------------------------------------- checkpoint

@dataclass
class Checkpoint:
    config: TrainConfig
    meta: dict
    tensors: dict[str, np.ndarray]
    epoch: int
    best_val_mae: float


MAGIC = b"IGT1"


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """``IGT1`` | u32 header length | JSON header | float64 LE payload | sha256 of all preceding bytes."""
    names = list(ckpt.tensors)
    header = {
        "config": asdict(ckpt.config),
        "meta": ckpt.meta,
        "epoch": ckpt.epoch,
        "best_val_mae": ckpt.best_val_mae,
        "tensors": [{"name": n, "shape": list(ckpt.tensors[n].shape)} for n in names],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(
        np.ascontiguousarray(ckpt.tensors[n], dtype="<f8").tobytes() for n in names)
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 40 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an IGT1 checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    (hlen,) = struct.unpack("<I", body[4:8])
    header = json.loads(body[8:8 + hlen])
    pos = 8 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        tensors[entry["name"]] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        pos += 8 * n
    if pos != len(body):
        raise CheckpointError(f"{path}: payload length does not match the manifest")
    known = {f.name for f in fields(TrainConfig)}
    config = TrainConfig(**{k: v for k, v in header["config"].items() if k in known})
    return Checkpoint(config, header["meta"], tensors, header["epoch"], header["best_val_mae"])


# ---------------------------------------------------------------------- training

@dataclass
class TrainResult:
    checkpoint: Checkpoint
    train_losses: list[float] = field(default_factory=list)
    val_maes: list[float] = field(default_factory=list)
    epochs_run: int = 0
    steps: int = 0
    seconds_per_epoch: float = 0.0
    stopped_early: bool = False


class IGT:
    """A trainable model bound to its training split's graph and feature scaling."""

    def __init__(self, config: TrainConfig, train: Dataset):
        config.validate()
        if len(train) == 0:
            raise ValueError("training split is empty")
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.graph: HeteroGraph = build_graph(train)
        self.blocks = normalized_blocks(self.graph)
        self.scaler = FeatureScaler.fit(train)
        widths = {t: train.schema.width(t) for t in NODE_TYPES}
        self.model = IGTModel(config, widths, self.graph.registry.counts(), rng)
        self.model.y_offset = float(np.mean(train.hours))
        self.model.y_scale = float(np.std(train.hours)) or 1.0
        self.optimizer = Adam(self.model.params(), lr=config.lr)
        self.train_counts = {t: _counts(train.element_ids(t)) for t in NODE_TYPES}
        self.epoch = 0
        self.best_val_mae = math.inf

    # ----------------------------------------------------------- fit
    def fit(self, train: Dataset, val: Dataset,
            on_batch: Callable[[int, Batch, float], None] | None = None) -> TrainResult:
        cfg = self.config
        if len(val) == 0:
            raise ValueError("validation split is empty")
        batches = make_batches(train, self.graph.registry, self.scaler, cfg.batch_size)
        val_setup = self._eval_setup(val, add_edges=False)
        table = self.model.table
        params = self.model.params()
        result = TrainResult(self.checkpoint())
        best_epoch, steps, t_start = 0, 0, time.perf_counter()
        for epoch in range(1, cfg.max_epochs + 1):
            if table is not None:
                table.reset_state()
            for batch in batches:
                self.optimizer.zero_grad()
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        pred, h_t = self.model.forward(batch, self.blocks, table)
                except FloatingPointError as exc:
                    raise DivergenceError(f"epoch {epoch}, step {steps + 1}: {exc}", result.checkpoint) from exc
                loss = mae_loss(batch.y, pred)
                lval = float(loss.data)
                if not math.isfinite(lval):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, step {steps + 1}",
                                          result.checkpoint)
                ad.backward(loss)
                if any(not np.all(np.isfinite(p.grad)) for p in params.values() if p.grad is not None):
                    raise DivergenceError(f"non-finite gradient at epoch {epoch}", result.checkpoint)
                if h_t is not None:
                    self.model.write_back(table, batch, h_t)
                self.optimizer.step()
                steps += 1
                result.train_losses.append(lval)
                if on_batch is not None:
                    on_batch(epoch, batch, lval)
                if cfg.max_steps and steps >= cfg.max_steps:
                    break
            self.epoch = epoch
            val_mae = mae(val.hours, self._run(val_setup))
            result.val_maes.append(val_mae)
            log.info("epoch %d  train_loss %.4f  val_mae %.4f", epoch, lval, val_mae)
            if not math.isfinite(val_mae):
                raise DivergenceError(f"non-finite validation MAE at epoch {epoch}", result.checkpoint)
            if val_mae < self.best_val_mae:
                self.best_val_mae = val_mae
                best_epoch = epoch
                result.checkpoint = self.checkpoint()
            elif epoch - best_epoch >= cfg.patience:
                result.stopped_early = True
                break
            if cfg.max_steps and steps >= cfg.max_steps:
                break
        result.epochs_run = self.epoch
        result.steps = steps
        result.seconds_per_epoch = (time.perf_counter() - t_start) / max(self.epoch, 1)
        return result

    # ----------------------------------------------------------- inference
    def _eval_setup(self, ds: Dataset, add_edges: bool):
        graph = extend_for_inference(self.graph, ds, add_edges=add_edges)
        blocks = normalized_blocks(graph) if self.model.uses_graph else []
        batches = make_batches(ds, graph.registry, self.scaler, self.config.eval_batch_size or self.config.batch_size)
        return graph, blocks, batches

    def _run(self, setup) -> np.ndarray:
        graph, blocks, batches = setup
        table = self.model.table.grow(graph.registry.counts()) if self.model.uses_graph else None
        preds = []
        with ad.no_grad():
            for batch in batches:
                pred, h_t = self.model.forward(batch, blocks, table)
                if h_t is not None:
                    self.model.write_back(table, batch, h_t)
                preds.append(pred.data)
        return np.concatenate(preds) if preds else np.zeros(0)

    def predict(self, ds: Dataset, add_edges: bool = True) -> np.ndarray:
        """Chronological inference from the current table state; the state itself is left untouched.

        ``add_edges`` links the new orders into the graph (test-time adjacency);
        without it unseen elements stay isolated (validation-time adjacency).
        """
        if len(ds) == 0:
            return np.zeros(0)
        return self._run(self._eval_setup(ds, add_edges))

    def validation_mae(self, val: Dataset) -> float:
        return mae(val.hours, self.predict(val, add_edges=False))

    # ----------------------------------------------------------- checkpointing
    def checkpoint(self) -> Checkpoint:
        tensors = {f"param.{k}": p.data.copy() for k, p in self.model.params().items()}
        st: AdamState = self.optimizer.state
        for k in self.model.params():
            if k in st.m:
                tensors[f"adam.m.{k}"] = st.m[k].copy()
                tensors[f"adam.v.{k}"] = st.v[k].copy()
        if self.model.table is not None:
            for t, off in self.model.table.offset.items():
                tensors[f"state.{t}"] = off.copy()
        for (a, b), e in self.graph.edges.items():
            tensors[f"graph.{a}-{b}"] = e.astype(np.float64)
        for t in NODE_TYPES:
            tensors[f"scaler.mean.{t}"] = self.scaler.mean[t].copy()
            tensors[f"scaler.std.{t}"] = self.scaler.std[t].copy()
        reg = {t: [int(v) if t == SLOT else str(v) for v in self.graph.registry.ids[t]] for t in NODE_TYPES}
        meta = {
            "registry": reg,
            "y_offset": self.model.y_offset,
            "y_scale": self.model.y_scale,
            "widths": self.model.widths,
            "adam": {"step": st.step, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps},
            "train_counts": {t: {str(k): v for k, v in c.items()} for t, c in self.train_counts.items()},
        }
        return Checkpoint(self.config, meta, tensors, self.epoch, self.best_val_mae)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "IGT":
        self = object.__new__(cls)
        cfg = ckpt.config
        self.config = cfg
        meta, tens = ckpt.meta, ckpt.tensors
        ids = {t: [int(v) if t == SLOT else v for v in meta["registry"][t]] for t in NODE_TYPES}
        registry = NodeRegistry(ids, {t: {v: i for i, v in enumerate(ids[t])} for t in NODE_TYPES})
        edges = {}
        for key, arr in tens.items():
            if key.startswith("graph."):
                a, b = key[len("graph."):].split("-")
                edges[(a, b)] = arr.astype(np.int64).reshape(-1, 2)
        self.graph = HeteroGraph(registry, edges)
        self.blocks = normalized_blocks(self.graph)
        self.scaler = FeatureScaler({t: tens[f"scaler.mean.{t}"] for t in NODE_TYPES},
                                    {t: tens[f"scaler.std.{t}"] for t in NODE_TYPES})
        self.model = IGTModel(cfg, meta["widths"], registry.counts(), np.random.default_rng(cfg.seed))
        self.model.y_offset, self.model.y_scale = meta["y_offset"], meta["y_scale"]
        params = self.model.params()
        for k, p in params.items():
            p.data = tens[f"param.{k}"].copy()
        self.optimizer = Adam(params, lr=meta["adam"]["lr"], beta1=meta["adam"]["beta1"],
                              beta2=meta["adam"]["beta2"], eps=meta["adam"]["eps"])
        self.optimizer.state.step = meta["adam"]["step"]
        for k in params:
            if f"adam.m.{k}" in tens:
                self.optimizer.state.m[k] = tens[f"adam.m.{k}"].copy()
                self.optimizer.state.v[k] = tens[f"adam.v.{k}"].copy()
        if self.model.table is not None:
            for t in NODE_TYPES:
                self.model.table.offset[t] = tens[f"state.{t}"].copy()
        self.train_counts = {t: {(int(k) if t == SLOT else k): v for k, v in c.items()}
                             for t, c in meta["train_counts"].items()}
        self.epoch, self.best_val_mae = ckpt.epoch, ckpt.best_val_mae
        return self


def _counts(ids) -> dict:
    vals, counts = np.unique(np.asarray(ids).astype(str) if len(ids) else np.array([], str), return_counts=True)
    return {str(v): int(c) for v, c in zip(vals, counts)}


def train(train_ds: Dataset, val_ds: Dataset, config: TrainConfig,
          on_batch: Callable[[int, Batch, float], None] | None = None) -> tuple[IGT, TrainResult]:
    """Fit a fresh model and return it restored to its best validation epoch."""
    igt = IGT(config, train_ds)
    result = igt.fit(train_ds, val_ds, on_batch=on_batch)
    return IGT.from_checkpoint(result.checkpoint), result


# ---------------------------------------------------------------------- baseline

class LinearRegression:
    """Ordinary least squares on the concatenated raw element features."""

    def __init__(self):
        self.coef: np.ndarray | None = None

    @staticmethod
    def design(ds: Dataset) -> np.ndarray:
        cols = [ds.order_features(t) for t in NODE_TYPES]
        return np.column_stack(cols + [np.ones(len(ds))])

    def fit(self, ds: Dataset) -> "LinearRegression":
        self.coef, *_ = np.linalg.lstsq(self.design(ds), ds.hours, rcond=None)
        return self

    def predict(self, ds: Dataset) -> np.ndarray:
        return self.design(ds) @ self.coef


# ---------------------------------------------------------------------- grid search

GRID_COLUMNS = ("L", "D", "val_mae", "test_mae", "test_mape", "test_mare", "seconds_per_epoch")


def run_cell(ds: Dataset, config: TrainConfig) -> dict:
    train_ds, val_ds, test_ds = chronological_split(ds, config.split)
    model, result = train(train_ds, val_ds, config)
    pred = model.predict(test_ds)
    return {"L": config.layers, "D": config.dim, "val_mae": result.checkpoint.best_val_mae,
            "test_mae": mae(test_ds.hours, pred), "test_mape": mape(test_ds.hours, pred),
            "test_mare": mare(test_ds.hours, pred), "seconds_per_epoch": result.seconds_per_epoch}


def read_grid_csv(path: str | Path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    with open(p, newline="") as fh:
        return [{k: (int(v) if k in ("L", "D") else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def _cell_worker(args):
    ds, cfg = args
    try:
        return run_cell(ds, cfg), None
    except Exception as exc:  # per-cell failures are recorded, the grid continues
        nan = {k: math.nan for k in GRID_COLUMNS}
        nan.update(L=cfg.layers, D=cfg.dim)
        return nan, f"{type(exc).__name__}: {exc}"


def grid_search(ds: Dataset, layer_grid, dim_grid, base: TrainConfig, out_csv: str | Path | None = None,
                jobs: int = 1, on_cell: Callable[[dict, str | None], None] | None = None) -> list[dict]:
    """Train and evaluate one model per (L, D) cell, appending rows to ``out_csv`` as they finish.

    Cells already present in ``out_csv`` are skipped, so an interrupted grid resumes.
    """
    layer_grid, dim_grid = list(layer_grid), list(dim_grid)
    if not layer_grid or not dim_grid:
        raise ValueError("grids must be non-empty")
    done = read_grid_csv(out_csv) if out_csv else []
    finished = {(r["L"], r["D"]) for r in done}
    todo = [(L, D) for L in layer_grid for D in dim_grid if (L, D) not in finished]
    if out_csv and not Path(out_csv).exists():
        with open(out_csv, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(GRID_COLUMNS)
    cfgs = []
    for L, D in todo:
        cfg = replace(base, layers=L, dim=D)
        cfg.validate(grid=True)
        cfgs.append(cfg)

    def record(row, err):
        if out_csv:
            with open(out_csv, "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow([_grid_fmt(row[k]) for k in GRID_COLUMNS])
        if err:
            log.warning("grid cell L=%s D=%s failed: %s", row["L"], row["D"], err)
        if on_cell:
            on_cell(row, err)
        done.append(row)

    if jobs > 1 and len(cfgs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row, err in pool.map(_cell_worker, [(ds, c) for c in cfgs]):
                record(row, err)
    else:
        for cfg in cfgs:
            record(*_cell_worker((ds, cfg)))
    order = {(L, D): k for k, (L, D) in enumerate((L, D) for L in layer_grid for D in dim_grid)}
    return sorted(done, key=lambda r: order.get((r["L"], r["D"]), len(order)))


def _grid_fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "nan" if math.isnan(v) else repr(float(v))
