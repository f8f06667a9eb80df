"""Error metrics, payment-hour entropy, and grouped reports (by hour, by history bin)."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .orders import HOURS_PER_DAY


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {len(y)} labels vs {len(yhat)} predictions")
    if len(y) == 0:
        raise ValueError("metrics need at least one sample")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mape(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if np.any(y == 0):
        raise ValueError("MAPE is undefined for zero ground truth")
    return float(np.mean(np.abs((y - yhat) / y)))


def mare(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    denom = float(np.sum(y))
    if denom == 0:
        raise ValueError("MARE is undefined when the labels sum to zero")
    return float(np.sum(np.abs(y - yhat)) / denom)


def entropy(counts: Iterable[float]) -> float:
    """Shannon entropy (nats) of the distribution proportional to ``counts``."""
    p = np.asarray(list(counts), dtype=np.float64)
    p = p[p > 0]
    if p.size == 0:
        raise ValueError("entropy of an empty distribution")
    p = p / p.sum()
    return float(-(p * np.log(p)).sum())


def label_entropy(labels, bin_hours: float = 1.0) -> float:
    bins = np.floor(np.asarray(labels, dtype=np.float64) / bin_hours).astype(np.int64)
    return entropy(Counter(bins.tolist()).values())


def entropy_by_payment_time(hours_of_day, labels, bin_hours: float = 1.0) -> dict[int, tuple[float | None, int]]:
    """hour -> (entropy of the binned label distribution, order count); None for empty hours."""
    hours_of_day = np.asarray(hours_of_day, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.float64)
    out = {}
    for h in range(HOURS_PER_DAY):
        sel = labels[hours_of_day == h]
        out[h] = (label_entropy(sel, bin_hours) if len(sel) else None, int(len(sel)))
    return out


@dataclass
class MetricsReport:
    mae: float | None
    mape: float | None
    mare: float | None
    count: int
    low_confidence: bool = False
    groups: dict[str, "MetricsReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_report(y, yhat, min_count: int = 0) -> MetricsReport:
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        return MetricsReport(None, None, None, 0, low_confidence=True)
    return MetricsReport(mae(y, yhat), mape(y, yhat), mare(y, yhat), int(len(y)),
                         low_confidence=len(y) < min_count)


def by_hour_report(y, yhat, hours_of_day) -> MetricsReport:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    hours_of_day = np.asarray(hours_of_day, dtype=np.int64)
    report = metrics_report(y, yhat)
    for h in range(HOURS_PER_DAY):
        sel = hours_of_day == h
        report.groups[f"{h:02d}"] = metrics_report(y[sel], yhat[sel])
    return report


@dataclass(frozen=True)
class BinSpec:
    """Order-count bins: unseen (N=0), then (e0, e1], (e1, e2], ..., (e_last, inf)."""

    element_type: str
    edges: tuple[int, ...]

    def __post_init__(self):
        if not self.edges or self.edges[0] != 0 or list(self.edges) != sorted(set(self.edges)):
            raise ValueError("bin edges must start at 0 and increase strictly")

    def labels(self) -> list[str]:
        names = ["small", "medium", "large"]
        out = ["unseen (N=0)"]
        bounds = list(self.edges) + [math.inf]
        for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
            name = names[k] if len(bounds) - 1 == 3 else f"bin{k + 1}"
            out.append(f"{name} ({lo}<N)" if hi == math.inf else f"{name} ({lo}<N<={hi})")
        return out

    def assign(self, counts) -> np.ndarray:
        """Bin index per count: 0 for unseen, k for (edges[k-1], edges[k]]."""
        counts = np.asarray(counts, dtype=np.int64)
        return np.searchsorted(np.asarray(self.edges), counts, side="left")


RETAILER_BINS = BinSpec("retailer", (0, 100, 500))
ADDRESS_BINS = BinSpec("origin", (0, 500, 1000))


def bin_spec_for(element_type: str) -> BinSpec:
    if element_type == "retailer":
        return RETAILER_BINS
    if element_type in ("origin", "destination"):
        return BinSpec(element_type, ADDRESS_BINS.edges)
    raise ValueError(f"no history bins defined for {element_type!r}")


def binned_report(y, yhat, element_ids, train_counts: Mapping, spec: BinSpec,
                  min_count: int = 50) -> MetricsReport:
    """Metrics per history bin of the element; counts come from the training split only."""
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    counts = np.fromiter((train_counts.get(e, 0) for e in element_ids), dtype=np.int64, count=len(y))
    assigned = spec.assign(counts)
    report = metrics_report(y, yhat)
    for k, label in enumerate(spec.labels()):
        sel = assigned == k
        report.groups[label] = metrics_report(y[sel], yhat[sel], min_count=min_count)
    return report


# ---------------------------------------------------------------------- emitters

def write_json(report: MetricsReport | dict, path: str | Path) -> None:
    data = report.to_dict() if isinstance(report, MetricsReport) else report
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _fmt(v: float | None, scale: float = 1.0) -> str:
    return "" if v is None else repr(float(v) * scale)


def write_groups_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group_key", "count", "mae_hours", "mape_pct", "mare_pct"])
        for key, g in report.groups.items():
            w.writerow([key, g.count, _fmt(g.mae), _fmt(g.mape, 100.0), _fmt(g.mare, 100.0)])


def write_entropy_csv(table: Mapping[int, tuple[float | None, int]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "entropy_nats", "count"])
        for hour in sorted(table):
            ent, count = table[hour]
            w.writerow([hour, _fmt(ent), count])
