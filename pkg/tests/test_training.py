import dataclasses
import math

import numpy as np
import pytest

from igt import autodiff as ad
from igt.autodiff import Tensor
from igt.orders import SplitSpec, chronological_split
from igt.training import (GRID_COLUMNS, IGT, CheckpointError, DivergenceError, LinearHead, LinearRegression,
                          TrainConfig, grid_search, load_checkpoint, mae_loss, read_grid_csv, save_checkpoint,
                          train)
import igt.training as training

FAST = TrainConfig(layers=1, dim=8, batch_size=128, max_epochs=2, patience=5, val_days=2, test_days=3)


@pytest.fixture(scope="module")
def splits(small_world):
    return chronological_split(small_world, SplitSpec(2, 3))


def test_mae_loss_examples():
    assert float(mae_loss(np.array([1.0, 2.0]), Tensor(np.array([1.0, 2.0]))).data) == 0.0
    assert float(mae_loss(np.array([10.0]), Tensor(np.array([13.0]))).data) == 3.0
    assert float(mae_loss(np.array([2.0, 4.0, 6.0]), Tensor(np.array([3.0, 3.0, 9.0]))).data) == pytest.approx(5 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        mae_loss(np.array([]), Tensor(np.array([])))


def test_reference_protocol_accepted():
    cfg = TrainConfig(batch_size=8192, patience=100, max_epochs=1000)
    cfg.validate()
    assert (cfg.batch_size, cfg.patience, cfg.max_epochs) == (8192, 100, 1000)
    assert TrainConfig() == cfg


def test_grid_config_validation():
    TrainConfig(layers=5, dim=256).validate(grid=True)
    with pytest.raises(ValueError):
        TrainConfig(layers=6, dim=32).validate(grid=True)
    with pytest.raises(ValueError):
        TrainConfig(mode="both").validate()


def test_lr_zero_constant_val_and_stops_at_patience(splits):
    tr, va, _ = splits
    cfg = dataclasses.replace(FAST, lr=0.0, max_epochs=50, patience=3)
    _, res = train(tr, va, cfg)
    assert len(set(res.val_maes)) == 1
    assert res.stopped_early and res.epochs_run == 1 + cfg.patience


def test_seed_determinism(splits):
    tr, va, _ = splits
    a = train(tr, va, FAST)[1].train_losses
    b = train(tr, va, FAST)[1].train_losses
    assert a == b


def test_batches_visited_chronologically(splits):
    tr, va, _ = splits
    seen = []
    train(tr, va, dataclasses.replace(FAST, max_epochs=2), on_batch=lambda e, b, l: seen.append((e, b.first_ts)))
    for epoch in (1, 2):
        ts = [t for e, t in seen if e == epoch]
        assert ts == sorted(ts) and len(ts) == math.ceil(len(tr) / FAST.batch_size)


def test_checkpoint_round_trip_bit_exact(splits, tmp_path):
    tr, va, _ = splits
    model, res = train(tr, va, FAST)
    path = tmp_path / "m.igt"
    save_checkpoint(res.checkpoint, path)
    reloaded = IGT.from_checkpoint(load_checkpoint(path))
    assert reloaded.validation_mae(va) == res.checkpoint.best_val_mae
    assert model.validation_mae(va) == res.checkpoint.best_val_mae
    assert path.read_bytes()[:4] == b"IGT1"


def test_checkpoint_corruption_detected(splits, tmp_path):
    tr, va, _ = splits
    _, res = train(tr, va, dataclasses.replace(FAST, max_epochs=1))
    path = tmp_path / "m.igt"
    save_checkpoint(res.checkpoint, path)
    raw = bytearray(path.read_bytes())
    raw[-40] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)
    path.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


@pytest.mark.parametrize("mode", ["full", "thegcn_only", "etaformer_only"])
def test_modes_train_and_predict(splits, mode):
    tr, va, te = splits
    model, res = train(tr, va, dataclasses.replace(FAST, mode=mode))
    pred = model.predict(te)
    assert pred.shape == (len(te),) and np.all(np.isfinite(pred))
    assert res.epochs_run == 2


def test_ablation_differs_from_full(splits):
    tr, va, te = splits
    full = train(tr, va, FAST)[0].predict(te)
    raw = train(tr, va, dataclasses.replace(FAST, mode="etaformer_only"))[0].predict(te)
    assert not np.allclose(full, raw)


def test_linear_head_zero_and_gradcheck():
    head = LinearHead(8, np.random.default_rng(0))
    emb = [Tensor(np.random.default_rng(k).normal(size=(3, 2))) for k in range(4)]
    head.params["head.W"].data[:] = 0.0
    np.testing.assert_array_equal(head(emb).data, 0.0)
    head = LinearHead(8, np.random.default_rng(1))
    w = np.array([1.0, -2.0, 0.5])
    errs = ad.gradcheck(lambda: (head(emb) * w).sum(), head.params)
    assert max(errs.values()) <= 1e-4


def test_divergence_aborts_with_checkpoint(splits):
    tr, va, _ = splits
    igt = IGT(dataclasses.replace(FAST, lr=1e300), tr)
    with pytest.raises(DivergenceError) as info:
        igt.fit(tr, va)
    ckpt = info.value.checkpoint
    assert ckpt is not None and all(np.all(np.isfinite(v)) for v in ckpt.tensors.values())


def test_linear_regression_recovers_linear_labels(small_world):
    lr = LinearRegression().fit(small_world)
    x = LinearRegression.design(small_world)
    coef = np.random.default_rng(0).normal(size=x.shape[1])
    y = x @ coef
    fitted, *_ = np.linalg.lstsq(x, y, rcond=None)
    np.testing.assert_allclose(x @ fitted, y, atol=1e-8)
    assert lr.predict(small_world).shape == (len(small_world),)


GRID_BASE = dataclasses.replace(FAST, max_epochs=1, dim=16)


def test_grid_one_cell(small_world, tmp_path):
    rows = grid_search(small_world, [1], [16], GRID_BASE, tmp_path / "g.csv")
    assert len(rows) == 1
    assert list(read_grid_csv(tmp_path / "g.csv")[0]) == list(GRID_COLUMNS)


def test_grid_repeat_cell_deterministic(small_world, tmp_path):
    a = grid_search(small_world, [1], [16], GRID_BASE, tmp_path / "a.csv")[0]
    b = grid_search(small_world, [1], [16], GRID_BASE, tmp_path / "b.csv")[0]
    assert a["test_mae"] == b["test_mae"]


def test_grid_resume_runs_only_missing(small_world, tmp_path, monkeypatch):
    path = tmp_path / "g.csv"
    cells = [(L, D) for L in (1, 2, 3, 4, 5) for D in (16, 32, 64, 128, 256)]
    with open(path, "w") as fh:
        fh.write(",".join(GRID_COLUMNS) + "\n")
        for L, D in cells[:13]:
            fh.write(f"{L},{D},1.0,1.0,0.1,0.1,0.5\n")
    ran = []
    monkeypatch.setattr(training, "run_cell", lambda ds, cfg: ran.append((cfg.layers, cfg.dim)) or
                        {"L": cfg.layers, "D": cfg.dim, "val_mae": 1.0, "test_mae": 1.0, "test_mape": 0.1,
                         "test_mare": 0.1, "seconds_per_epoch": 0.1})
    rows = grid_search(small_world, (1, 2, 3, 4, 5), (16, 32, 64, 128, 256), GRID_BASE, path)
    assert ran == cells[13:] and len(ran) == 12
    assert len(rows) == 25 and len(read_grid_csv(path)) == 25


def test_grid_failed_cell_is_nan(small_world, tmp_path, monkeypatch):
    def boom(ds, cfg):
        raise RuntimeError("cell exploded")

    monkeypatch.setattr(training, "run_cell", boom)
    rows = grid_search(small_world, [1, 2], [16], GRID_BASE, tmp_path / "g.csv")
    assert len(rows) == 2 and all(math.isnan(r["test_mae"]) for r in rows)
