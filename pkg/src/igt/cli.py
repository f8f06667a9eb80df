"""Command-line entry point: ``igt gen-data | train | eval | grid``.

Every command writes one ``manifest.json`` into ``--out-dir`` next to its
outputs.  Exit codes: 0 success, 2 bad configuration, 3 bad data or
checkpoint, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import ConfigError, apply_kv, read_kv
from .evaluation import (binned_report, bin_spec_for, by_hour_report, entropy_by_payment_time, mae,
                         metrics_report, write_entropy_csv, write_groups_csv, write_json)
from .orders import (NODE_TYPES, DataError, GeneratorConfig, chronological_split, generate_synthetic,
                     ingest_csv, write_csv)
from .training import (GRID_DIMS, GRID_LAYERS, CheckpointError, DivergenceError, IGT, LinearRegression,
                       TrainConfig, grid_search, load_checkpoint, save_checkpoint, train)

log = logging.getLogger("igt")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def content_hash(path: str | Path) -> str:
    """Git blob hash of a file: sha1 over ``blob <size>\\0`` plus the bytes."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------- config plumbing

_TRAIN_FLAGS = {
    "mode": "mode", "L": "layers", "D": "dim", "batch_size": "batch_size", "patience": "patience",
    "max_epochs": "max_epochs", "max_steps": "max_steps", "lr": "lr", "val_days": "val_days",
    "test_days": "test_days", "eval_batch_size": "eval_batch_size",
}
_GEN_FLAGS = {
    "n_days": "n_days", "orders_per_day": "orders_per_day", "sigma": "sigma",
    "holdout_frac": "holdout_retailer_frac", "n_retailers": "n_retailers",
}


def _resolve(base, args: argparse.Namespace, flags: dict[str, str]):
    """File values first, then command-line flags; flags win."""
    values = read_kv(args.config) if args.config else {}
    obj = apply_kv(base, values)
    overrides = {dest: getattr(args, flag) for flag, dest in flags.items() if getattr(args, flag, None) is not None}
    if "seed" in {f.name for f in dataclasses.fields(obj)} and args.seed is not None:
        overrides["seed"] = args.seed
    return apply_kv(obj, overrides)


def _train_config(args) -> TrainConfig:
    cfg = _resolve(TrainConfig(), args, _TRAIN_FLAGS)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _report_dict(y, pred) -> dict:
    return metrics_report(y, pred).to_dict()


# ---------------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve(GeneratorConfig(), args, _GEN_FLAGS)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seed = 0 if args.seed is None else args.seed
    out = _out_dir(args)
    ds = generate_synthetic(cfg, seed)
    path = out / args.name
    try:
        write_csv(ds, path)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    manifest = RunManifest("gen-data", dataclasses.asdict(cfg), seed,
                           {args.config: content_hash(args.config)} if args.config else {},
                           [str(path)], {"total_seconds": time.perf_counter() - t0})
    manifest.write(out)
    log.info("wrote %d orders to %s", len(ds), path)
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    cfg = _train_config(args)
    out = _out_dir(args)
    ds = ingest_csv(args.data)
    train_ds, val_ds, test_ds = chronological_split(ds, cfg.split)
    log.info("split: %d train, %d val, %d test orders", len(train_ds), len(val_ds), len(test_ds))
    inputs = {args.data: content_hash(args.data)}
    if args.config:
        inputs[args.config] = content_hash(args.config)
    manifest = RunManifest("train", dataclasses.asdict(cfg), cfg.seed, inputs)
    ckpt_path = out / "model.igt"
    try:
        model, result = train(train_ds, val_ds, cfg)
    except DivergenceError as exc:
        if exc.checkpoint is not None:
            save_checkpoint(exc.checkpoint, ckpt_path)
            manifest.outputs.append(str(ckpt_path))
        diag = out / "divergence.json"
        diag.write_text(json.dumps({"error": str(exc), "config": dataclasses.asdict(cfg)}, indent=2) + "\n")
        manifest.outputs.append(str(diag))
        manifest.timings["total_seconds"] = time.perf_counter() - t0
        manifest.write(out)
        log.error("training diverged: %s (diagnostics in %s)", exc, diag)
        return EXIT_DIVERGED
    t_train = time.perf_counter() - t0
    save_checkpoint(result.checkpoint, ckpt_path)
    metrics = {
        "mode": cfg.mode,
        "epochs_run": result.epochs_run,
        "best_epoch_val_mae": result.checkpoint.best_val_mae,
        "stopped_early": result.stopped_early,
        "val": _report_dict(val_ds.hours, model.predict(val_ds, add_edges=False)),
    }
    if len(test_ds):
        metrics["test"] = _report_dict(test_ds.hours, model.predict(test_ds))
        if args.baseline:
            lr_pred = LinearRegression().fit(train_ds).predict(test_ds)
            metrics["baseline_linear_regression_test"] = _report_dict(test_ds.hours, lr_pred)
    metrics_path = out / "metrics.json"
    write_json(metrics, metrics_path)
    manifest.outputs += [str(ckpt_path), str(metrics_path)]
    manifest.timings.update(train_seconds=t_train, seconds_per_epoch=result.seconds_per_epoch,
                            total_seconds=time.perf_counter() - t0)
    manifest.write(out)
    log.info("val MAE %.4f h; checkpoint %s", metrics["val"]["mae"], ckpt_path)
    return EXIT_OK


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    ckpt = load_checkpoint(args.checkpoint)
    ds = ingest_csv(args.data)
    widths = {t: ds.schema.width(t) for t in NODE_TYPES}
    if ckpt.meta.get("widths") != widths:
        raise CheckpointError(f"checkpoint feature widths {ckpt.meta.get('widths')} do not match data {widths}")
    model = IGT.from_checkpoint(ckpt)
    _, _, test_ds = chronological_split(ds, ckpt.config.split)
    if len(test_ds) == 0:
        raise DataError("the test split is empty")
    pred = model.predict(test_ds)
    y = test_ds.hours
    outputs = []
    overall = out / "overall.json"
    write_json(metrics_report(y, pred), overall)
    outputs.append(overall)
    if args.by_hour:
        path = out / "by_hour.csv"
        write_groups_csv(by_hour_report(y, pred, test_ds.hour_of_day), path)
        outputs.append(path)
    for element_type in args.bins or []:
        path = out / f"bins_{element_type}.csv"
        report = binned_report(y, pred, test_ds.element_ids(element_type), model.train_counts[element_type],
                               bin_spec_for(element_type))
        write_groups_csv(report, path)
        outputs.append(path)
    if args.entropy:
        path = out / "entropy.csv"
        write_entropy_csv(entropy_by_payment_time(test_ds.hour_of_day, y), path)
        outputs.append(path)
    inputs = {args.checkpoint: content_hash(args.checkpoint), args.data: content_hash(args.data)}
    RunManifest("eval", dataclasses.asdict(ckpt.config), ckpt.config.seed, inputs, [str(p) for p in outputs],
                {"total_seconds": time.perf_counter() - t0}).write(out)
    log.info("test MAE %.4f h over %d orders", mae(y, pred), len(y))
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_grid(args) -> int:
    t0 = time.perf_counter()
    base = _train_config(args)
    out = _out_dir(args)
    ds = ingest_csv(args.data)
    path = out / "grid.csv"
    try:
        rows = grid_search(ds, args.layers, args.dims, base, path, jobs=args.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    inputs = {args.data: content_hash(args.data)}
    if args.config:
        inputs[args.config] = content_hash(args.config)
    cfg = dataclasses.asdict(base) | {"layer_grid": args.layers, "dim_grid": args.dims}
    RunManifest("grid", cfg, base.seed, inputs, [str(path)], {"total_seconds": time.perf_counter() - t0}).write(out)
    log.info("grid has %d cells in %s", len(rows), path)
    return EXIT_OK


# ---------------------------------------------------------------------- parser

def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".", help="directory for outputs and manifest.json")
    p.add_argument("--config", default=None, help="flat 'key = value' file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def _train_flags(p: argparse.ArgumentParser, with_shape: bool = True) -> None:
    p.add_argument("--mode", choices=("full", "thegcn_only", "etaformer_only"))
    if with_shape:
        p.add_argument("--L", type=int, help="propagation layers")
        p.add_argument("--D", type=int, help="embedding dimension")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--val-days", type=int)
    p.add_argument("--test-days", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igt", description="Delivery-time estimation with an inductive graph transformer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic order CSV")
    _shared(p)
    p.add_argument("--name", default="orders.csv")
    p.add_argument("--n-days", type=int)
    p.add_argument("--orders-per-day", type=int)
    p.add_argument("--n-retailers", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--holdout-frac", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a chronological split and write a checkpoint")
    _shared(p)
    p.add_argument("--data", required=True)
    _train_flags(p)
    p.add_argument("--baseline", action="store_true", help="also report linear regression on the test split")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _shared(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--by-hour", action="store_true", help="24-row per-payment-hour CSV")
    p.add_argument("--bins", action="append", choices=("retailer", "origin", "destination"),
                   help="metrics per training-history bin of this element type (repeatable)")
    p.add_argument("--entropy", action="store_true", help="per-hour delivery-time entropy CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="L x D hyper-parameter grid; resumes from an existing grid.csv")
    _shared(p)
    p.add_argument("--data", required=True)
    _train_flags(p, with_shape=False)
    p.add_argument("--layers", type=_int_list, default=list(GRID_LAYERS))
    p.add_argument("--dims", type=_int_list, default=list(GRID_DIMS))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, FloatingPointError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
