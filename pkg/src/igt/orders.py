"""Orders, their per-element dynamic features, CSV I/O, a synthetic order world, and splits.

An order is the tuple (retailer, origin, destination, payment slot) plus a
delivery-time label in hours.  Payment time is discretized to the hour:
``time_slot = payment_ts // 3600`` indexes absolute hours and the payment
slot element is the hour of day (UTC) of that slot.

Per-element features are computed from history strictly before the start of
the query slot, so a feature never sees an order paid in the same hour, and a
delivery time enters a retailer's mean only after that package was signed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RETAILER, ORIGIN, DESTINATION, SLOT = "retailer", "origin", "destination", "slot"
NODE_TYPES = (RETAILER, ORIGIN, DESTINATION, SLOT)
HOURS_PER_DAY = 24
SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400

CSV_COLUMNS = ("order_id", "retailer_id", "origin_id", "destination_id", "payment_unix_ts",
               "delivery_hours", "origin_lon", "origin_lat", "dest_lon", "dest_lat")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Order:
    order_id: str
    retailer_id: str
    origin_id: str
    destination_id: str
    payment_time: int
    delivery_hours: float

    @property
    def time_slot(self) -> int:
        return self.payment_time // SECONDS_PER_HOUR

    @property
    def hour(self) -> int:
        return self.time_slot % HOURS_PER_DAY


@dataclass(frozen=True)
class FeatureSchema:
    """Names of the dynamic statistics attached to each element type.

    A documented stand-in: history mean/count for retailers, coordinates and
    history volume for addresses, a 24-way one-hot for the payment hour.
    """

    names: dict[str, tuple[str, ...]]

    def width(self, element_type: str) -> int:
        return len(self.names[element_type])

    def check_type(self, element_type: str) -> None:
        if element_type not in self.names:
            raise KeyError(f"unknown element type {element_type!r}; expected one of {NODE_TYPES}")


DEFAULT_SCHEMA = FeatureSchema({
    RETAILER: ("hist_mean_hours", "hist_log_count"),
    ORIGIN: ("lon", "lat", "hist_log_count"),
    DESTINATION: ("lon", "lat", "hist_log_count"),
    SLOT: tuple(f"hour_{h:02d}" for h in range(HOURS_PER_DAY)),
})


class _History:
    """Per-element prefix counts and value sums over time-sorted events, queryable at any slot."""

    def __init__(self, codes: np.ndarray, slots: np.ndarray, values: np.ndarray):
        self.span = int(slots.max()) + 2 if len(slots) else 2
        keys = codes.astype(np.int64) * self.span + slots
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.cum_sum = np.concatenate([[0.0], np.cumsum(values[order])])

    def query(self, codes: np.ndarray, slots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Event count and value total per element, over events strictly before ``slots``."""
        codes = np.asarray(codes, dtype=np.int64)
        slots = np.clip(np.asarray(slots, dtype=np.int64), 0, self.span - 1)
        lo = np.searchsorted(self.keys, codes * self.span, side="left")
        hi = np.searchsorted(self.keys, codes * self.span + slots, side="left")
        count = hi - lo
        total = self.cum_sum[hi] - self.cum_sum[lo]
        unknown = codes < 0
        count[unknown] = 0
        total[unknown] = 0.0
        return count, total


class FeatureStore:
    def __init__(self, ds: "Dataset"):
        self.schema = ds.schema
        self.vocab = ds.vocab
        self.lookup = {t: {v: i for i, v in enumerate(ds.vocab[t])} for t in NODE_TYPES}
        self.coords = ds.coords
        self.t0 = int(ds.slots.min()) if len(ds) else 0
        rel = ds.slots - self.t0
        # Orders count from their payment slot; a label counts only in slots
        # that start after the package was signed.
        done = rel + np.ceil(ds.hours).astype(np.int64)
        self.history = {t: _History(ds.codes[t], rel, np.zeros(len(rel))) for t in (RETAILER, ORIGIN, DESTINATION)}
        self.labels = _History(ds.codes[RETAILER], done, ds.hours)

    def codes_for(self, element_type: str, ids: Iterable) -> np.ndarray:
        table = self.lookup[element_type]
        return np.fromiter((table.get(i, -1) for i in ids), dtype=np.int64)

    def features(self, element_type: str, codes: np.ndarray, slots: np.ndarray) -> np.ndarray:
        """Feature rows for dataset codes (``-1`` = unknown element) at absolute hour slots."""
        self.schema.check_type(element_type)
        codes = np.asarray(codes, dtype=np.int64)
        slots = np.broadcast_to(np.asarray(slots, dtype=np.int64), codes.shape)
        n = len(codes)
        if element_type == SLOT:
            out = np.zeros((n, HOURS_PER_DAY))
            known = codes >= 0
            hours = np.asarray(self.vocab[SLOT], dtype=np.int64)[codes[known]]
            out[np.flatnonzero(known), hours] = 1.0
            return out
        count, total = self.history[element_type].query(codes, slots - self.t0)
        logc = np.log1p(count)
        if element_type == RETAILER:
            signed, total = self.labels.query(codes, slots - self.t0)
            mean = np.divide(total, signed, out=np.zeros(n), where=signed > 0)
            return np.column_stack([mean, logc])
        xy = np.zeros((n, 2))
        known = codes >= 0
        xy[known] = self.coords[element_type][codes[known]]
        return np.column_stack([xy, logc])


class Dataset:
    """Orders sorted by payment time, with interned element identifiers.

    ``take`` produces subsets that share the vocabulary and feature store of
    the full dataset, so features in a split still use all prior history.
    """

    def __init__(self, order_ids, retailer_ids, origin_ids, destination_ids, payment_ts, hours,
                 coords: dict[str, dict] | None = None, schema: FeatureSchema = DEFAULT_SCHEMA):
        payment_ts = np.asarray(payment_ts, dtype=np.int64)
        order = np.argsort(payment_ts, kind="stable")
        self.schema = schema
        self.order_ids = np.asarray(order_ids, dtype=object)[order]
        self.payment_ts = payment_ts[order]
        self.hours = np.asarray(hours, dtype=np.float64)[order]
        if np.any(~np.isfinite(self.hours)) or np.any(self.hours <= 0):
            raise DataError("delivery_hours must be finite and positive")
        self.slots = self.payment_ts // SECONDS_PER_HOUR
        raw = {
            RETAILER: np.asarray(retailer_ids, dtype=object)[order],
            ORIGIN: np.asarray(origin_ids, dtype=object)[order],
            DESTINATION: np.asarray(destination_ids, dtype=object)[order],
        }
        self.vocab: dict[str, np.ndarray] = {}
        self.codes: dict[str, np.ndarray] = {}
        for t, ids in raw.items():
            vocab, inv = np.unique(ids.astype(str), return_inverse=True)
            self.vocab[t] = vocab.astype(object)
            self.codes[t] = inv.astype(np.int64)
        hour_of_day = self.slots % HOURS_PER_DAY
        vocab, inv = np.unique(hour_of_day, return_inverse=True)
        self.vocab[SLOT] = vocab.astype(np.int64)
        self.codes[SLOT] = inv.astype(np.int64)
        coords = coords or {}
        self.coords = {}
        for t in (ORIGIN, DESTINATION):
            known = coords.get(t, {})
            self.coords[t] = np.array([known.get(v, (0.0, 0.0)) for v in self.vocab[t]],
                                      dtype=np.float64).reshape(-1, 2)
        self.store = FeatureStore(self)
        self._features = {t: self.store.features(t, self.codes[t], self.slots) for t in NODE_TYPES}

    # ------------------------------------------------------------------ views
    def __len__(self) -> int:
        return len(self.payment_ts)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        sub = object.__new__(Dataset)
        sub.schema, sub.vocab, sub.coords, sub.store = self.schema, self.vocab, self.coords, self.store
        sub.order_ids = self.order_ids[idx]
        sub.payment_ts = self.payment_ts[idx]
        sub.hours = self.hours[idx]
        sub.slots = self.slots[idx]
        sub.codes = {t: c[idx] for t, c in self.codes.items()}
        sub._features = {t: f[idx] for t, f in self._features.items()}
        return sub

    def element_ids(self, element_type: str) -> np.ndarray:
        """External identifier of the given element for every order."""
        return self.vocab[element_type][self.codes[element_type]]

    def order_features(self, element_type: str) -> np.ndarray:
        """Feature rows of each order's element at that order's own slot."""
        return self._features[element_type]

    def feature_vector(self, element_type: str, element_id, time_slot: int) -> np.ndarray:
        self.schema.check_type(element_type)
        if element_type == SLOT:
            out = np.zeros(HOURS_PER_DAY)
            out[int(element_id) % HOURS_PER_DAY] = 1.0
            return out
        code = self.store.codes_for(element_type, [element_id])
        return self.store.features(element_type, code, np.array([time_slot]))[0]

    @property
    def hour_of_day(self) -> np.ndarray:
        return self.slots % HOURS_PER_DAY

    @property
    def days(self) -> np.ndarray:
        return self.payment_ts // SECONDS_PER_DAY

    def order(self, k: int) -> Order:
        return Order(str(self.order_ids[k]), str(self.element_ids(RETAILER)[k]),
                     str(self.element_ids(ORIGIN)[k]), str(self.element_ids(DESTINATION)[k]),
                     int(self.payment_ts[k]), float(self.hours[k]))

    def __iter__(self):
        return (self.order(k) for k in range(len(self)))

    @classmethod
    def from_orders(cls, orders: Sequence[Order], coords: dict[str, dict] | None = None) -> "Dataset":
        cols = list(zip(*[(o.order_id, o.retailer_id, o.origin_id, o.destination_id,
                           o.payment_time, o.delivery_hours) for o in orders])) or [()] * 6
        return cls(*cols, coords=coords)


# ---------------------------------------------------------------------- CSV

def ingest_csv(path: str | Path) -> Dataset:
    rows = ([], [], [], [], [], [])
    coords: dict[str, dict] = {ORIGIN: {}, DESTINATION: {}}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: header lacks columns {missing}")
        pos = [header.index(c) for c in CSV_COLUMNS]
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(rec)}")
            f = [rec[p].strip() for p in pos]
            try:
                ts = int(f[4])
                hours = float(f[5])
                olon, olat, dlon, dlat = map(float, f[6:10])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            if not math.isfinite(hours) or hours <= 0:
                raise DataError(f"{path}: row {lineno}: delivery_hours must be positive, got {hours}")
            if not all(f[:4]):
                raise DataError(f"{path}: row {lineno}: empty identifier")
            for col, val in zip(rows, (f[0], f[1], f[2], f[3], ts, hours)):
                col.append(val)
            coords[ORIGIN].setdefault(f[2], (olon, olat))
            coords[DESTINATION].setdefault(f[3], (dlon, dlat))
    return Dataset(*rows, coords=coords)


def write_csv(ds: Dataset, path: str | Path) -> None:
    ocode, dcode = ds.codes[ORIGIN], ds.codes[DESTINATION]
    oxy, dxy = ds.coords[ORIGIN][ocode], ds.coords[DESTINATION][dcode]
    rid, oid, did = ds.element_ids(RETAILER), ds.element_ids(ORIGIN), ds.element_ids(DESTINATION)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(len(ds)):
            w.writerow([ds.order_ids[k], rid[k], oid[k], did[k], int(ds.payment_ts[k]),
                        repr(float(ds.hours[k])), repr(float(oxy[k, 0])), repr(float(oxy[k, 1])),
                        repr(float(dxy[k, 0])), repr(float(dxy[k, 1]))])


# ---------------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    val_days: int = 10
    test_days: int = 15

    def __post_init__(self):
        if self.val_days < 0 or self.test_days < 0:
            raise ValueError("split day counts must be non-negative")


def chronological_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Last ``test_days`` calendar days (UTC) to test, the ``val_days`` before to validation."""
    tail = spec.val_days + spec.test_days
    if len(ds) == 0:
        if tail:
            raise DataError("cannot split an empty dataset")
        return ds, ds, ds
    days = ds.days
    first, last = int(days.min()), int(days.max())
    span = last - first + 1
    if tail and tail >= span:
        raise DataError(f"split of {spec.val_days}+{spec.test_days} days needs more than the "
                        f"dataset's {span} days")
    test_start = last + 1 - spec.test_days
    val_start = test_start - spec.val_days
    train = np.flatnonzero(days < val_start)
    val = np.flatnonzero((days >= val_start) & (days < test_start))
    test = np.flatnonzero(days >= test_start)
    return ds.take(train), ds.take(val), ds.take(test)


# ---------------------------------------------------------------------- synthetic orders

DEFAULT_DIURNAL = (0.6, 0.3, 0.2, 0.15, 0.15, 0.2, 0.5, 1.0, 1.8, 2.6, 3.2, 3.4,
                   3.0, 2.8, 3.0, 3.2, 3.1, 2.9, 2.8, 3.2, 3.8, 4.0, 3.0, 1.6)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic order world (all times in hours).

    label = base_hours + retailer_effect + distance_rate * dist(origin, destination)
            + late_penalty_hours * [hour >= cutoff_hour] + N(0, sigma), clipped below at 1.
    A retailer's effect is its shipping origin's handling time plus its own packing time.
    ``holdout_retailer_frac`` of retailers only place orders in the last ``holdout_days`` days.
    """

    n_retailers: int = 500
    n_origins: int = 40
    n_destinations: int = 120
    n_cities: int = 5
    n_days: int = 60
    orders_per_day: int = 200
    sigma: float = 1.0
    cutoff_hour: int = 15
    base_hours: float = 12.0
    origin_effect_max: float = 6.0
    retailer_effect_max: float = 4.0
    distance_rate: float = 0.8
    late_penalty_hours: float = 18.0
    retailer_zipf: float = 0.6
    destination_zipf: float = 0.6
    holdout_retailer_frac: float = 0.0
    holdout_days: int = 10
    start_ts: int = 1609459200
    diurnal_weights: tuple = DEFAULT_DIURNAL

    def validate(self) -> None:
        for name in ("n_retailers", "n_origins", "n_destinations", "n_cities", "n_days", "orders_per_day"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 <= self.cutoff_hour <= HOURS_PER_DAY:
            raise ValueError("cutoff_hour must lie in [0, 24]")
        w = np.asarray(self.diurnal_weights, dtype=float)
        if w.shape != (HOURS_PER_DAY,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("diurnal_weights needs 24 non-negative values with a positive sum")
        if not 0 <= self.holdout_retailer_frac < 1:
            raise ValueError("holdout_retailer_frac must lie in [0, 1)")


def _zipf_weights(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    w = w[rng.permutation(n)]
    return w / w.sum()


def _clipped_normal_mean(mu: np.ndarray, sigma: float, floor: float = 1.0) -> np.ndarray:
    """E[max(mu + sigma * eps, floor)] for standard normal eps."""
    if sigma == 0:
        return np.maximum(mu, floor)
    from scipy.stats import norm

    a = (floor - mu) / sigma
    return mu + (floor - mu) * norm.cdf(a) + sigma * norm.pdf(a)


@dataclass
class SyntheticWorld:
    config: GeneratorConfig
    seed: int
    origin_xy: np.ndarray = field(repr=False)
    dest_xy: np.ndarray = field(repr=False)
    retailer_origin: np.ndarray = field(repr=False)
    retailer_effect: np.ndarray = field(repr=False)
    retailer_p: np.ndarray = field(repr=False)
    dest_p: np.ndarray = field(repr=False)
    holdout: np.ndarray = field(repr=False)
    rng: np.random.Generator = field(repr=False)

    @classmethod
    def create(cls, config: GeneratorConfig, seed: int) -> "SyntheticWorld":
        config.validate()
        rng = np.random.default_rng(seed)
        c = config
        origin_xy = np.column_stack([rng.uniform(100, 120, c.n_origins), rng.uniform(22, 42, c.n_origins)])
        centers = np.column_stack([rng.uniform(100, 120, c.n_cities), rng.uniform(22, 42, c.n_cities)])
        dest_xy = centers[rng.integers(c.n_cities, size=c.n_destinations)] \
            + rng.normal(0.0, 0.3, (c.n_destinations, 2))
        retailer_origin = rng.integers(c.n_origins, size=c.n_retailers)
        origin_effect = rng.uniform(0, c.origin_effect_max, c.n_origins)
        packing = rng.uniform(0, c.retailer_effect_max, c.n_retailers)
        retailer_p = _zipf_weights(rng, c.n_retailers, c.retailer_zipf)
        dest_p = _zipf_weights(rng, c.n_destinations, c.destination_zipf)
        n_hold = int(round(c.holdout_retailer_frac * c.n_retailers))
        if c.holdout_retailer_frac > 0:
            n_hold = max(n_hold, 1)
        holdout = np.zeros(c.n_retailers, dtype=bool)
        holdout[rng.permutation(c.n_retailers)[:n_hold]] = True
        return cls(c, seed, origin_xy, dest_xy, retailer_origin,
                   origin_effect[retailer_origin] + packing, retailer_p, dest_p, holdout, rng)

    def _retailer_probs(self, in_holdout_window: bool) -> np.ndarray:
        p = self.retailer_p.copy()
        if not in_holdout_window:
            p[self.holdout] = 0.0
        return p / p.sum()

    def mean_label(self, r: np.ndarray, d: np.ndarray, hour: np.ndarray) -> np.ndarray:
        c = self.config
        dist = np.linalg.norm(self.origin_xy[self.retailer_origin[r]] - self.dest_xy[d], axis=-1)
        late = (hour >= c.cutoff_hour).astype(float)
        return c.base_hours + self.retailer_effect[r] + c.distance_rate * dist + c.late_penalty_hours * late

    def expected_label_mean(self) -> float:
        """Closed-form mean of all labels, integrating out retailer, destination, hour and noise."""
        c = self.config
        w = np.asarray(c.diurnal_weights, dtype=float)
        p_late = w[c.cutoff_hour:].sum() / w.sum()
        r, d = np.meshgrid(np.arange(c.n_retailers), np.arange(c.n_destinations), indexing="ij")
        early = _clipped_normal_mean(self.mean_label(r, d, np.zeros_like(r)), c.sigma)
        late = _clipped_normal_mean(self.mean_label(r, d, np.full_like(r, HOURS_PER_DAY)), c.sigma)
        per_pair = (1 - p_late) * early + p_late * late
        hold_days = min(c.holdout_days, c.n_days) if self.holdout.any() else 0
        total = 0.0
        for n_days, window in ((c.n_days - hold_days, False), (hold_days, True)):
            if n_days:
                p = self._retailer_probs(window)
                total += n_days * float(p @ per_pair @ self.dest_p)
        return total / c.n_days

    def sample(self) -> Dataset:
        c = self.config
        rng = self.rng
        w = np.asarray(c.diurnal_weights, dtype=float)
        w = w / w.sum()
        n = c.orders_per_day
        hold_from = c.n_days - c.holdout_days if self.holdout.any() else c.n_days
        rs, ds_, ts = [], [], []
        for day in range(c.n_days):
            p = self._retailer_probs(day >= hold_from)
            rs.append(rng.choice(c.n_retailers, size=n, p=p))
            ds_.append(rng.choice(c.n_destinations, size=n, p=self.dest_p))
            hours = rng.choice(HOURS_PER_DAY, size=n, p=w)
            ts.append(c.start_ts + day * SECONDS_PER_DAY + hours * SECONDS_PER_HOUR
                      + rng.integers(SECONDS_PER_HOUR, size=n))
        r, d, t = np.concatenate(rs), np.concatenate(ds_), np.concatenate(ts)
        hour = (t // SECONDS_PER_HOUR) % HOURS_PER_DAY
        y = self.mean_label(r, d, hour) + c.sigma * rng.standard_normal(len(r))
        y = np.maximum(y, 1.0)
        order = np.argsort(t, kind="stable")
        r, d, t, y = r[order], d[order], t[order], y[order]
        o = self.retailer_origin[r]
        rid = np.array([f"R{i:05d}" for i in range(c.n_retailers)], dtype=object)
        oid = np.array([f"O{i:04d}" for i in range(c.n_origins)], dtype=object)
        did = np.array([f"D{i:05d}" for i in range(c.n_destinations)], dtype=object)
        coords = {ORIGIN: dict(zip(oid, map(tuple, self.origin_xy))),
                  DESTINATION: dict(zip(did, map(tuple, self.dest_xy)))}
        order_ids = [f"{k:08d}" for k in range(len(t))]
        return Dataset(order_ids, rid[r], oid[o], did[d], t, y, coords=coords)


def generate_synthetic(config: GeneratorConfig, seed: int) -> Dataset:
    return SyntheticWorld.create(config, seed).sample()
