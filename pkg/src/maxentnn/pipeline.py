"""Feature assembly, scaling, splitting and append-only online serving.

A measurement record (one inspection of one coupon) is turned into a fixed
530-column feature row: 252 power ratios, 252 correlation coefficients, the
18 laminate stiffness terms, 4 one-hot condition flags, 3 one-hot layup
flags and the applied load. The target is the damage fraction n/N. Dead or
absent channels become masked cells that are median-imputed before scaling,
so one bad sensor path never discards a record.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, MaxEntParams, Prediction, predict_point
from .errors import (
    DegenerateBaselineError,
    IngestionError,
    InvalidInputError,
)
from .laminate import STIFFNESS_COLUMNS, abd_matrices, standard_layups, stiffness_feature_row
from .signals import correlation_coefficient, miner_damage_index, power_ratio

__all__ = [
    "N_CHANNELS",
    "Condition",
    "ChannelMeasurement",
    "MeasurementRecord",
    "FEATURE_COLUMNS",
    "TABLE_COLUMNS",
    "TARGET_COLUMN",
    "build_feature_row",
    "FeatureTable",
    "read_records",
    "write_records",
    "ImputerSpec",
    "fit_imputer",
    "apply_imputer",
    "ScalerSpec",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "split",
    "prepare_dataset",
    "OnlineStore",
]

N_CHANNELS = 252


class Condition(enum.IntEnum):
    """Measurement context, in the order of the one-hot encoding."""

    BASELINE = 0
    CLAMPED = 1
    TRACTION_FREE = 2
    LOADED = 3


_CONDITION_NAMES = {c.name.lower(): c for c in Condition}


@dataclass(frozen=True)
class ChannelMeasurement:
    """One sensing path at one excitation frequency: signal plus baseline."""

    channel_id: int
    signal: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        if not (1 <= int(self.channel_id) <= N_CHANNELS):
            raise IngestionError(f"channel id must lie in 1..{N_CHANNELS}, got {self.channel_id!r}")
        for name in ("signal", "baseline"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.ndim != 1 or x.size < 2:
                raise IngestionError(f"channel {self.channel_id}: {name} needs at least 2 samples")
            if not np.all(np.isfinite(x)):
                raise IngestionError(f"channel {self.channel_id}: {name} has non-finite samples")
            x.setflags(write=False)
            object.__setattr__(self, name, x)
        object.__setattr__(self, "channel_id", int(self.channel_id))


@dataclass(frozen=True)
class MeasurementRecord:
    """One inspection of one coupon: metadata plus up to 252 channels."""

    coupon_id: str
    layup_id: int
    cycles: int
    condition: Condition
    load: float = 0.0
    channels: tuple = ()

    def __post_init__(self):
        if self.cycles < 0:
            raise IngestionError(f"cycles must be >= 0, got {self.cycles!r}")
        if not isinstance(self.condition, Condition):
            raise IngestionError(f"condition must be a Condition, got {self.condition!r}")
        if self.condition is not Condition.LOADED and self.load != 0.0:
            raise IngestionError("load must be 0 unless the condition is 'loaded'")
        if self.load < 0 or not math.isfinite(self.load):
            raise IngestionError(f"load must be finite and >= 0, got {self.load!r}")
        seen = set()
        for ch in self.channels:
            if ch.channel_id in seen:
                raise IngestionError(f"duplicate channel id {ch.channel_id}")
            seen.add(ch.channel_id)
        object.__setattr__(self, "channels", tuple(self.channels))


def _build_columns() -> tuple:
    cols = [f"pw_c{i}" for i in range(1, N_CHANNELS + 1)]
    cols += [f"cc_c{i}" for i in range(1, N_CHANNELS + 1)]
    cols += list(STIFFNESS_COLUMNS)
    cols += [f"condition_{i}" for i in range(4)]
    cols += [f"layup_{i}" for i in (1, 2, 3)]
    cols.append("load")
    return tuple(cols)


FEATURE_COLUMNS = _build_columns()
TARGET_COLUMN = "D"
TABLE_COLUMNS = FEATURE_COLUMNS + (TARGET_COLUMN,)

_N_FEATURES = len(FEATURE_COLUMNS)  # 530


def build_feature_row(record, layups=None, failure_cycles=None):
    """Turn one record into (features, mask, target).

    ``layups`` maps layup id -> Layup (defaults to the three coupon stacks)
    and ``failure_cycles`` maps coupon id -> cycles at failure. Returns the
    530-wide feature vector, a boolean mask flagging missing cells (absent
    channels, dead baselines) and the damage-fraction target.
    """
    if layups is None:
        layups = standard_layups()
    if failure_cycles is None or record.coupon_id not in failure_cycles:
        raise IngestionError(f"unknown coupon {record.coupon_id!r}: no failure cycle count")
    if record.layup_id not in layups:
        raise IngestionError(f"unknown layup id {record.layup_id!r}")

    features = np.full(_N_FEATURES, np.nan)
    mask = np.ones(_N_FEATURES, dtype=bool)

    for ch in record.channels:
        col = ch.channel_id - 1
        try:
            features[col] = power_ratio(ch.signal, ch.baseline)
            mask[col] = False
        except (DegenerateBaselineError, InvalidInputError):
            pass
        col = N_CHANNELS + ch.channel_id - 1
        try:
            features[col] = correlation_coefficient(ch.signal, ch.baseline)
            mask[col] = False
        except (DegenerateBaselineError, InvalidInputError):
            pass

    base = 2 * N_CHANNELS
    features[base : base + 18] = stiffness_feature_row(abd_matrices(layups[record.layup_id]))
    mask[base : base + 18] = False

    base += 18
    features[base : base + 4] = 0.0
    features[base + int(record.condition)] = 1.0
    mask[base : base + 4] = False

    base += 4
    features[base : base + 3] = 0.0
    features[base + record.layup_id - 1] = 1.0
    mask[base : base + 3] = False

    features[-1] = record.load
    mask[-1] = False

    target = miner_damage_index(record.cycles, failure_cycles[record.coupon_id])
    return features, mask, target


@dataclass
class FeatureTable:
    """A feature matrix with a per-cell missing mask and damage targets."""

    rows: np.ndarray
    mask: np.ndarray
    targets: np.ndarray
    columns: tuple = FEATURE_COLUMNS

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise IngestionError(
                f"feature rows must be (m, {len(self.columns)}), got {self.rows.shape}"
            )
        if self.mask.shape != self.rows.shape:
            raise IngestionError("mask shape must match rows")
        if self.targets.shape != (self.rows.shape[0],):
            raise IngestionError("targets must be one value per row")

    def __len__(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def from_records(cls, records, layups=None, failure_cycles=None) -> "FeatureTable":
        triples = [build_feature_row(r, layups, failure_cycles) for r in records]
        if not triples:
            return cls(np.zeros((0, _N_FEATURES)), np.zeros((0, _N_FEATURES), bool), np.zeros(0))
        rows = np.stack([t[0] for t in triples])
        mask = np.stack([t[1] for t in triples])
        targets = np.array([t[2] for t in triples])
        return cls(rows, mask, targets)

    def subset(self, indices) -> "FeatureTable":
        idx = np.asarray(indices, dtype=int)
        return FeatureTable(self.rows[idx], self.mask[idx], self.targets[idx], self.columns)

    def to_csv(self, path) -> None:
        """Write the canonical header plus one row per record; masked cells are empty."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(self.columns) + [TARGET_COLUMN])
            for row, miss, target in zip(self.rows, self.mask, self.targets):
                cells = ["" if m else repr(float(v)) for v, m in zip(row, miss)]
                cells.append(repr(float(target)))
                writer.writerow(cells)

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestionError(f"{path}: empty file") from None
            expected = list(FEATURE_COLUMNS) + [TARGET_COLUMN]
            if header != expected:
                extra = sorted(set(header) - set(expected))
                missing = sorted(set(expected) - set(header))
                raise IngestionError(
                    f"{path}: header mismatch (missing {missing[:5]}, unexpected {extra[:5]})"
                )
            rows, mask, targets = [], [], []
            for lineno, cells in enumerate(reader, start=2):
                if len(cells) != len(expected):
                    raise IngestionError(f"{path}:{lineno}: expected {len(expected)} cells")
                vals = [float(c) if c != "" else np.nan for c in cells[:-1]]
                rows.append(vals)
                mask.append([c == "" or v != v for c, v in zip(cells[:-1], vals)])
                target = float(cells[-1])
                if not (0.0 <= target <= 1.0):
                    raise IngestionError(
                        f"{path}:{lineno}: damage fraction must lie in [0, 1], got {target}"
                    )
                targets.append(target)
        if not rows:
            return cls(np.zeros((0, _N_FEATURES)), np.zeros((0, _N_FEATURES), bool), np.zeros(0))
        return cls(np.array(rows), np.array(mask, dtype=bool), np.array(targets))


def _record_from_json(obj: dict) -> MeasurementRecord:
    try:
        cond = _CONDITION_NAMES[str(obj["condition"]).lower()]
        channels = tuple(
            ChannelMeasurement(int(c["id"]), c["signal"], c["baseline"])
            for c in obj.get("channels", [])
        )
        return MeasurementRecord(
            coupon_id=str(obj["coupon"]),
            layup_id=int(obj["layup"]),
            cycles=int(obj["cycles"]),
            condition=cond,
            load=float(obj.get("load", 0.0)),
            channels=channels,
        )
    except IngestionError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"malformed record: {exc}") from exc


def read_records(path, strict: bool = True):
    """Read one-JSON-object-per-line records.

    Returns (records, skipped) where ``skipped`` counts malformed lines in
    lenient mode. In strict mode a malformed line raises IngestionError that
    names the line number.
    """
    records, skipped = [], 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(_record_from_json(json.loads(line)))
            except (json.JSONDecodeError, IngestionError) as exc:
                if strict:
                    raise IngestionError(f"{path}:{lineno}: {exc}") from exc
                skipped += 1
    return records, skipped


def write_records(path, records) -> None:
    """Inverse of read_records, mainly for tests and synthetic fixtures."""
    with open(path, "w") as fh:
        for r in records:
            obj = {
                "coupon": r.coupon_id,
                "layup": r.layup_id,
                "cycles": r.cycles,
                "condition": r.condition.name.lower(),
                "load": r.load,
                "channels": [
                    {"id": c.channel_id, "signal": list(map(float, c.signal)),
                     "baseline": list(map(float, c.baseline))}
                    for c in r.channels
                ],
            }
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class ImputerSpec:
    """Frozen per-column medians used to fill masked cells."""

    medians: np.ndarray


def fit_imputer(table: FeatureTable) -> ImputerSpec:
    """Median of the unmasked cells per column; 0 for fully masked columns."""
    medians = np.zeros(table.rows.shape[1])
    for j in range(table.rows.shape[1]):
        live = table.rows[~table.mask[:, j], j]
        if live.size:
            medians[j] = float(np.median(live))
    return ImputerSpec(medians)


def apply_imputer(spec: ImputerSpec, rows: np.ndarray, mask: np.ndarray) -> np.ndarray:
    filled = np.array(rows, dtype=float)
    filled[mask] = np.broadcast_to(spec.medians, rows.shape)[mask]
    return filled


@dataclass(frozen=True)
class ScalerSpec:
    """Per-column affine normalization fitted on training rows only.

    ``minmax_pm1`` maps the training min/max to [-1, 1]; ``standard`` maps
    to zero mean and unit variance. Constant columns map to 0 and are
    flagged, so their transform is not invertible.
    """

    kind: str
    center: np.ndarray
    scale: np.ndarray
    constant: np.ndarray


def fit_scaler(rows: np.ndarray, kind: str = "minmax_pm1") -> ScalerSpec:
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError(f"scaler needs a nonempty 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("scaler input must be complete; impute masked cells first")
    if kind == "minmax_pm1":
        lo, hi = x.min(axis=0), x.max(axis=0)
        center = 0.5 * (lo + hi)
        scale = 0.5 * (hi - lo)
    elif kind == "standard":
        center = x.mean(axis=0)
        scale = x.std(axis=0)
    else:
        raise InvalidInputError(f"unknown scaler kind {kind!r}")
    constant = scale == 0.0
    scale = np.where(constant, 1.0, scale)
    return ScalerSpec(kind, center, scale, constant)


def apply_scaler(spec: ScalerSpec, rows: np.ndarray) -> np.ndarray:
    x = np.asarray(rows, dtype=float)
    return (x - spec.center) / spec.scale


def invert_scaler(spec: ScalerSpec, rows: np.ndarray) -> np.ndarray:
    """Undo apply_scaler on non-constant columns (constant ones stay centered)."""
    x = np.asarray(rows, dtype=float)
    return x * spec.scale + spec.center


def split(table: FeatureTable, test_fraction: float, seed: int, stratify=None):
    """Deterministic seeded shuffle split into (train, test) tables.

    ``stratify`` may be an array of group labels (one per row); each group
    then contributes its proportional share of test rows, allocated by
    largest remainder so every group is within one row of its exact quota.
    """
    m = len(table)
    if not (0.0 < test_fraction < 1.0):
        raise InvalidInputError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    n_test = int(round(m * test_fraction))
    if n_test < 1 or n_test >= m:
        raise InvalidInputError(f"degenerate split: {m} rows at fraction {test_fraction}")

    rng = np.random.default_rng(seed)
    if stratify is None:
        perm = rng.permutation(m)
        test_idx = np.sort(perm[:n_test])
    else:
        groups = np.asarray(stratify)
        if groups.shape != (m,):
            raise InvalidInputError("stratify must provide one group label per row")
        values = np.unique(groups)
        quotas = {}
        for g in values:
            quotas[g] = (groups == g).sum() * test_fraction
        base = {g: int(math.floor(q)) for g, q in quotas.items()}
        leftover = n_test - sum(base.values())
        by_remainder = sorted(values, key=lambda g: (-(quotas[g] - base[g]), str(g)))
        for g in by_remainder[:leftover]:
            base[g] += 1
        chosen = []
        for g in values:
            members = np.flatnonzero(groups == g)
            take = min(base[g], members.size)
            chosen.append(rng.permutation(members)[:take])
        test_idx = np.sort(np.concatenate(chosen))
    train_idx = np.setdiff1d(np.arange(m), test_idx)
    return table.subset(train_idx), table.subset(test_idx)


def prepare_dataset(table: FeatureTable, scaler_kind: str = "minmax_pm1"):
    """Impute, scale and wrap a table for the predictor.

    Returns (dataset, imputer, scaler). Pass ``scaler_kind=None`` to skip
    scaling (the rows must then already be normalized).
    """
    imputer = fit_imputer(table)
    filled = apply_imputer(imputer, table.rows, table.mask)
    if scaler_kind is None:
        scaler = None
        points = filled
    else:
        scaler = fit_scaler(filled, scaler_kind)
        points = apply_scaler(scaler, filled)
    dataset = Dataset(points, table.targets.reshape(-1, 1), "regression")
    return dataset, imputer, scaler


class OnlineStore:
    """Append-only feature store serving predictions without any retraining.

    The imputer and scaler are frozen at construction; appended rows are
    normalized with those frozen statistics, so predictions made before an
    append are never changed by it. ``refit_count`` counts scaler refreshes
    and stays 0 unless ``refresh_scaler_on_append`` is explicitly enabled
    (which trades reproducibility for adaptivity).

    Concurrency: one writer may append while readers predict; a prediction
    snapshots the current row count once and never sees a half-written row.
    """

    def __init__(
        self,
        columns=FEATURE_COLUMNS,
        params: MaxEntParams | None = None,
        imputer: ImputerSpec | None = None,
        scaler: ScalerSpec | None = None,
        refresh_scaler_on_append: bool = False,
    ):
        self.columns = tuple(columns)
        self.params = params or MaxEntParams()
        self.imputer = imputer
        self.scaler = scaler
        self.refresh_scaler_on_append = refresh_scaler_on_append
        self.refit_count = 0
        self._raw: list[np.ndarray] = []
        self._scaled: list[np.ndarray] = []
        self._targets: list[float] = []

    @classmethod
    def from_table(
        cls,
        table: FeatureTable,
        params: MaxEntParams | None = None,
        scaler_kind: str | None = "minmax_pm1",
        refresh_scaler_on_append: bool = False,
    ) -> "OnlineStore":
        imputer = fit_imputer(table)
        filled = apply_imputer(imputer, table.rows, table.mask)
        scaler = fit_scaler(filled, scaler_kind) if scaler_kind else None
        store = cls(table.columns, params, imputer, scaler, refresh_scaler_on_append)
        for row, target in zip(filled, table.targets):
            store._push(row, float(target))
        return store

    def __len__(self) -> int:
        return len(self._targets)

    def _normalize(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape != (len(self.columns),):
            raise IngestionError(f"expected {len(self.columns)} features, got shape {x.shape}")
        missing = ~np.isfinite(x)
        if missing.any():
            if self.imputer is None:
                raise IngestionError("row has missing cells and the store has no imputer")
            x = np.where(missing, self.imputer.medians, x)
        return x

    def _push(self, raw_row: np.ndarray, target: float) -> int:
        scaled = apply_scaler(self.scaler, raw_row) if self.scaler else raw_row
        self._raw.append(raw_row)
        self._targets.append(target)
        # Appending the scaled row last keeps reader snapshots consistent:
        # a snapshot sizes itself on the scaled list.
        self._scaled.append(scaled)
        return len(self._scaled) - 1

    def append_row(self, features, target: float) -> int:
        """Append one feature row; returns its row index."""
        row = self._normalize(features)
        index = self._push(row, float(target))
        if self.refresh_scaler_on_append and self.scaler is not None:
            self._refresh_scaler()
        return index

    def append_record(self, record: MeasurementRecord, layups=None, failure_cycles=None) -> int:
        features, mask, target = build_feature_row(record, layups, failure_cycles)
        features = np.where(mask, np.nan, features)
        return self.append_row(features, target)

    def _refresh_scaler(self) -> None:
        raw = np.stack(self._raw)
        self.scaler = fit_scaler(raw, self.scaler.kind)
        self._scaled = list(apply_scaler(self.scaler, raw))
        self.refit_count += 1

    def snapshot(self) -> Dataset:
        """A consistent point-in-time Dataset of everything appended so far."""
        count = len(self._scaled)
        if count == 0:
            raise InvalidInputError("store is empty")
        points = np.stack(self._scaled[:count])
        targets = np.array(self._targets[:count]).reshape(-1, 1)
        return Dataset(points, targets, "regression")

    def predict(self, features, params: MaxEntParams | None = None) -> Prediction:
        """Predict the target at a raw (unscaled) feature vector."""
        row = self._normalize(features)
        query = apply_scaler(self.scaler, row) if self.scaler else row
        return predict_point(self.snapshot(), query, params or self.params)
