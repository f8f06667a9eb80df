import csv
import json

import pytest

from igt.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, content_hash, main
from igt.training import load_checkpoint, save_checkpoint

SMALL = ["--n-days", "10", "--orders-per-day", "60", "--n-retailers", "40"]
QUICK = ["--L", "1", "--D", "8", "--batch-size", "128", "--max-epochs", "2", "--val-days", "2", "--test-days", "3"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--seed", "4", "--out-dir", str(out), *SMALL]) == EXIT_OK
    return out / "orders.csv"


@pytest.fixture(scope="module")
def trained(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(data), "--out-dir", str(out), "--seed", "1", "--baseline", *QUICK]) == EXIT_OK
    return out


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_data_same_seed_same_bytes(tmp_path, data):
    assert main(["gen-data", "--seed", "4", "--out-dir", str(tmp_path), *SMALL]) == EXIT_OK
    assert (tmp_path / "orders.csv").read_bytes() == data.read_bytes()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 4


def test_gen_data_minimal_row_count(tmp_path):
    main(["gen-data", "--out-dir", str(tmp_path), "--n-days", "1", "--orders-per-day", "7"])
    assert len(_rows(tmp_path / "orders.csv")) == 1 + 7


def test_gen_data_fifty_thousand_orders(tmp_path):
    main(["gen-data", "--out-dir", str(tmp_path), "--n-days", "50", "--orders-per-day", "1000"])
    with open(tmp_path / "orders.csv") as fh:
        assert sum(1 for _ in fh) == 1 + 50_000


def test_train_writes_outputs_and_manifest(trained, data):
    metrics = json.loads((trained / "metrics.json").read_text())
    assert {"val", "test", "baseline_linear_regression_test"} <= set(metrics)
    assert metrics["epochs_run"] == 2 and metrics["test"]["mae"] > 0
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["config"]["layers"] == 1
    assert manifest["inputs"] == {str(data): content_hash(data)}
    assert (trained / "model.igt").read_bytes()[:4] == b"IGT1"


def test_train_rerun_identical_metrics(tmp_path, trained, data):
    main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--seed", "1", "--baseline", *QUICK])
    assert (tmp_path / "metrics.json").read_bytes() == (trained / "metrics.json").read_bytes()


def test_config_file_with_flag_override(tmp_path, data):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# quick run\nlayers = 1\ndim = 8\nbatch_size = 64\nmax_epochs = 1\nval_days = 2\ntest_days = 3\n")
    rc = main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--config", str(cfg), "--batch-size", "256"])
    assert rc == EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["batch_size"] == 256 and manifest["config"]["max_epochs"] == 1
    assert str(cfg) in manifest["inputs"]


@pytest.mark.parametrize("mode", ["etaformer_only", "thegcn_only"])
def test_ablation_modes_run(tmp_path, data, mode):
    assert main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--mode", mode, *QUICK]) == EXIT_OK
    assert json.loads((tmp_path / "metrics.json").read_text())["mode"] == mode


def test_eval_reports(tmp_path, trained, data):
    rc = main(["eval", "--checkpoint", str(trained / "model.igt"), "--data", str(data), "--out-dir", str(tmp_path),
               "--by-hour", "--bins", "retailer", "--bins", "origin", "--entropy"])
    assert rc == EXIT_OK
    assert len(_rows(tmp_path / "by_hour.csv")) == 1 + 24
    bins = _rows(tmp_path / "bins_retailer.csv")
    assert [r[0] for r in bins[1:]] == ["unseen (N=0)", "small (0<N<=100)", "medium (100<N<=500)", "large (500<N)"]
    overall = json.loads((tmp_path / "overall.json").read_text())
    assert sum(int(r[1]) for r in bins[1:]) == overall["count"]
    assert len(_rows(tmp_path / "bins_origin.csv")) == 5
    ent = _rows(tmp_path / "entropy.csv")
    assert ent[0] == ["hour", "entropy_nats", "count"] and len(ent) == 25
    assert json.loads((tmp_path / "manifest.json").read_text())["command"] == "eval"


def test_eval_schema_mismatch_rejected(tmp_path, trained, data):
    ckpt = load_checkpoint(trained / "model.igt")
    ckpt.meta["widths"] = dict(ckpt.meta["widths"], retailer=ckpt.meta["widths"]["retailer"] + 1)
    save_checkpoint(ckpt, tmp_path / "other.igt")
    rc = main(["eval", "--checkpoint", str(tmp_path / "other.igt"), "--data", str(data), "--out-dir", str(tmp_path)])
    assert rc == EXIT_DATA


def test_reference_protocol_flags_accepted(tmp_path, data):
    argv = ["train", "--data", str(data), "--out-dir", str(tmp_path), "--batch-size", "8192", "--patience", "100",
            "--max-epochs", "1000", "--max-steps", "1", "--L", "1", "--D", "8", "--val-days", "2", "--test-days", "3"]
    assert main(argv) == EXIT_OK
    cfg = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert (cfg["batch_size"], cfg["patience"], cfg["max_epochs"]) == (8192, 100, 1000)


def test_exit_code_config_error(tmp_path, data):
    assert main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--L", "0"]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 3\n")
    assert main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--config", str(bad)]) == EXIT_CONFIG


def test_exit_code_data_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)]) == EXIT_DATA
    broken = tmp_path / "broken.csv"
    broken.write_text("order_id,retailer\nx,r\n")
    assert main(["train", "--data", str(broken), "--out-dir", str(tmp_path)]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_divergence(tmp_path, data):
    rc = main(["train", "--data", str(data), "--out-dir", str(tmp_path), "--lr", "1e300", *QUICK])
    assert rc == EXIT_DIVERGED
    assert "error" in json.loads((tmp_path / "divergence.json").read_text())
    assert (tmp_path / "manifest.json").exists()


def test_grid_one_by_one(tmp_path, data):
    rc = main(["grid", "--data", str(data), "--out-dir", str(tmp_path), "--layers", "1", "--dims", "16",
               "--max-epochs", "1", "--batch-size", "128", "--val-days", "2", "--test-days", "3"])
    assert rc == EXIT_OK
    rows = _rows(tmp_path / "grid.csv")
    assert len(rows) == 2 and rows[1][:2] == ["1", "16"]
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["layer_grid"] == [1]


def test_grid_rejects_out_of_range(tmp_path, data):
    assert main(["grid", "--data", str(data), "--out-dir", str(tmp_path), "--layers", "7", "--dims", "8"]) == EXIT_CONFIG
