"""Core data types and plumbing: series containers, z-score normalization,
batching with padding, train/valid/test splitting, and file loaders.

Conventions used throughout the package:

* a series instance is a ``[T, F]`` float array plus a boolean mask of the
  same shape marking observed entries; masked-out entries are imputed as 0
  after normalization,
* batches are ``[B, T, F]`` with per-entry masks, padded to a common length,
* normalization statistics come from the train split only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class TimeSeries:
    """One series instance: values [T, F], observation mask [T, F], and an id."""

    values: np.ndarray
    mask: np.ndarray
    id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"series values must be [T, F] with T, F >= 1, got {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} does not match values {values.shape}")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_values(cls, values: np.ndarray, id: str = "") -> "TimeSeries":
        """Build a series from raw values; NaNs become masked-out zeros."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        mask = np.isfinite(values)
        filled = np.where(mask, values, 0.0)
        return cls(values=filled, mask=mask, id=id)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class Dataset:
    """A collection of series instances with optional labels and split tags."""

    instances: list[TimeSeries]
    labels: np.ndarray | None = None
    splits: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        n = len(self.instances)
        if self.splits is None:
            self.splits = np.full(n, "train", dtype=object)
        self.splits = np.asarray(self.splits, dtype=object)
        if len(self.splits) != n:
            raise ValueError("split tags must cover every instance")
        unknown = set(self.splits) - set(SPLITS)
        if unknown:
            raise ValueError(f"unknown split tags: {sorted(unknown)}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != n:
                raise ValueError("labels must cover every instance")
            if self.num_classes is None:
                self.num_classes = int(self.labels.max()) + 1
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def n_features(self) -> int:
        return self.instances[0].n_features

    @property
    def max_length(self) -> int:
        return max(s.length for s in self.instances)

    def indices_of(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == split)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            instances=[self.instances[i] for i in indices],
            labels=None if self.labels is None else self.labels[indices],
            splits=self.splits[indices],
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class Batch:
    """A padded stack of instances: values [B, T, F], mask [B, T, F]."""

    values: np.ndarray
    mask: np.ndarray
    labels: np.ndarray | None
    instance_ids: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """How to partition data: by instance ratios or by calendar months."""

    mode: str = "ratio"
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    calendar_months: tuple[int, int, int] = (12, 4, 4)

    def __post_init__(self):
        if self.mode not in ("ratio", "calendar"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "ratio" and abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


@dataclass(frozen=True)
class NormStats:
    """Per-feature z-score statistics, computed on the train split only."""

    mean: np.ndarray
    std: np.ndarray
    clamped: tuple[int, ...] = ()

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def compute_norm_stats(values: np.ndarray, mask: np.ndarray) -> NormStats:
    """Masked per-feature mean/std; zero-variance features are clamped to std 1."""
    n_features = values.shape[-1]
    flat_v = values.reshape(-1, n_features)
    flat_m = mask.reshape(-1, n_features)
    mean = np.zeros(n_features)
    std = np.ones(n_features)
    clamped = []
    for f in range(n_features):
        observed = flat_v[flat_m[:, f], f]
        if observed.size == 0:
            clamped.append(f)
            continue
        mean[f] = observed.mean()
        s = observed.std()
        if s <= 0:
            clamped.append(f)
            warnings.warn(f"feature {f} has zero variance on the train split; std clamped to 1")
        else:
            std[f] = s
    return NormStats(mean=mean, std=std, clamped=tuple(clamped))


def normalize_zscore(dataset: Dataset) -> tuple[Dataset, NormStats]:
    """Z-score a dataset using statistics from its train split.

    Masked-out entries are set to 0 in the output (the post-normalization
    imputation value). Returns the normalized dataset and the statistics
    needed to invert the transform.
    """
    train_idx = dataset.indices_of("train")
    if train_idx.size == 0:
        raise ValueError("train split is empty; cannot compute normalization statistics")
    train_values = np.concatenate([dataset.instances[i].values for i in train_idx], axis=0)
    train_mask = np.concatenate([dataset.instances[i].mask for i in train_idx], axis=0)
    stats = compute_norm_stats(train_values, train_mask)
    normalized = []
    for inst in dataset.instances:
        values = stats.apply(inst.values)
        values = np.where(inst.mask, values, 0.0)
        normalized.append(TimeSeries(values=values, mask=inst.mask, id=inst.id))
    return (
        Dataset(
            instances=normalized,
            labels=dataset.labels,
            splits=dataset.splits,
            num_classes=dataset.num_classes,
        ),
        stats,
    )


def pad_to_length(series: TimeSeries, target: int) -> TimeSeries:
    """Pad with masked zero rows at the end, or truncate keeping the head."""
    if target < 1:
        raise ValueError("target length must be >= 1")
    t = series.length
    if t == target:
        return series
    if t > target:
        return TimeSeries(series.values[:target], series.mask[:target], id=series.id)
    pad = target - t
    values = np.concatenate([series.values, np.zeros((pad, series.n_features))], axis=0)
    mask = np.concatenate([series.mask, np.zeros((pad, series.n_features), dtype=bool)], axis=0)
    return TimeSeries(values=values, mask=mask, id=series.id)


def make_batches(
    dataset: Dataset,
    batch_size: int,
    shuffle: bool = True,
    seed: int = 0,
    split: str | None = "train",
    pad_to: int | None = None,
    drop_short: bool = False,
) -> list[Batch]:
    """Partition the instances of one split into padded batches.

    Every instance of the split appears exactly once. A trailing batch with
    fewer than 2 instances is always dropped because contrastive denominators
    need at least one negative; ``drop_short`` additionally drops any
    incomplete trailing batch.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    indices = np.arange(len(dataset)) if split is None else dataset.indices_of(split)
    if indices.size < 2:
        raise ValueError("insufficient instances for contrastive batching")
    if shuffle:
        rng = np.random.default_rng(seed)
        indices = rng.permutation(indices)
    target = pad_to or max(dataset.instances[i].length for i in indices)
    batches = []
    for start in range(0, indices.size, batch_size):
        chunk = indices[start : start + batch_size]
        if chunk.size < 2 or (drop_short and chunk.size < batch_size and batches):
            break
        padded = [pad_to_length(dataset.instances[i], target) for i in chunk]
        batches.append(
            Batch(
                values=np.stack([p.values for p in padded]),
                mask=np.stack([p.mask for p in padded]),
                labels=None if dataset.labels is None else dataset.labels[chunk],
                instance_ids=tuple(dataset.instances[i].id for i in chunk),
            )
        )
    return batches


def split_by_ratio(n: int, ratios: Sequence[float], seed: int | None = None) -> np.ndarray:
    """Assign train/valid/test tags to n instances by ratio, optionally shuffled."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n_train = int(round(n * ratios[0]))
    n_valid = int(round(n * ratios[1]))
    tags = np.array(
        ["train"] * n_train + ["valid"] * n_valid + ["test"] * (n - n_train - n_valid),
        dtype=object,
    )
    if seed is not None:
        rng = np.random.default_rng(seed)
        tags = tags[rng.permutation(n)]
    return tags


# ---------------------------------------------------------------------------
# Long-series support (forecasting datasets).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LongSeries:
    """A single long multivariate series with optional timestamps."""

    series: TimeSeries
    timestamps: pd.DatetimeIndex | None = None
    feature_names: tuple[str, ...] = ()

    @property
    def length(self) -> int:
        return self.series.length


def split_long_series(long: LongSeries, spec: SplitSpec) -> tuple[int, int]:
    """Boundary indices (train_end, valid_end) along the time axis."""
    t = long.length
    if spec.mode == "ratio":
        train_end = int(t * spec.ratios[0])
        valid_end = train_end + int(t * spec.ratios[1])
        return train_end, valid_end
    if long.timestamps is None:
        raise ValueError("calendar split requires timestamps")
    months = long.timestamps.to_period("M")
    unique = months.unique()
    m_train, m_valid, _ = spec.calendar_months
    if len(unique) < m_train + m_valid + 1:
        raise ValueError(
            f"calendar split needs more than {m_train + m_valid} months, found {len(unique)}"
        )
    train_end = int(np.searchsorted(months.asi8, unique[m_train].ordinal))
    valid_end = int(np.searchsorted(months.asi8, unique[m_train + m_valid].ordinal))
    return train_end, valid_end


def normalize_long_series(long: LongSeries, train_end: int) -> tuple[LongSeries, NormStats]:
    """Z-score a long series with statistics from its train region only."""
    if train_end < 1:
        raise ValueError("train region is empty")
    series = long.series
    stats = compute_norm_stats(series.values[:train_end], series.mask[:train_end])
    values = np.where(series.mask, stats.apply(series.values), 0.0)
    return (
        LongSeries(
            series=TimeSeries(values=values, mask=series.mask, id=series.id),
            timestamps=long.timestamps,
            feature_names=long.feature_names,
        ),
        stats,
    )


def window_dataset(
    long: LongSeries,
    window: int,
    stride: int | None = None,
    start: int = 0,
    end: int | None = None,
    split: str = "train",
) -> Dataset:
    """Slice a long series into fixed-length instances for contrastive training."""
    end = long.length if end is None else end
    stride = stride or window
    series = long.series
    instances = []
    for t0 in range(start, end - window + 1, stride):
        instances.append(
            TimeSeries(
                values=series.values[t0 : t0 + window],
                mask=series.mask[t0 : t0 + window],
                id=f"{series.id}[{t0}:{t0 + window}]",
            )
        )
    if not instances:
        raise ValueError(f"window {window} does not fit in region [{start}, {end})")
    return Dataset(instances=instances, splits=np.full(len(instances), split, dtype=object))


# ---------------------------------------------------------------------------
# File loaders.
# ---------------------------------------------------------------------------


def load_csv(path: str | Path, target: str | None = None) -> LongSeries:
    """Load a long series from CSV.

    The first column is treated as a timestamp when it parses as one and is
    ignored for modeling; remaining columns are real-valued features. With
    ``target`` set, only that named column is kept (univariate mode).
    """
    frame = pd.read_csv(path)
    if frame.shape[1] == 0:
        raise ValueError(f"{path}: empty CSV")
    timestamps = None
    first = frame.columns[0]
    if not pd.api.types.is_numeric_dtype(frame[first]):
        parsed = pd.to_datetime(frame[first], errors="coerce")
        if parsed.notna().all():
            timestamps = pd.DatetimeIndex(parsed)
        frame = frame.drop(columns=[first])
    if target is not None:
        if target not in frame.columns:
            raise ValueError(f"{path}: target column {target!r} not found")
        frame = frame[[target]]
    values = frame.to_numpy(dtype=np.float64)
    return LongSeries(
        series=TimeSeries.from_values(values, id=Path(path).stem),
        timestamps=timestamps,
        feature_names=tuple(frame.columns),
    )


def _parse_float(token: str, path, line_no: int) -> float:
    token = token.strip()
    if token in ("?", "", "NaN", "nan"):
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"{path}:{line_no}: cannot parse value {token!r}") from None


def load_labeled_lines(path: str | Path) -> tuple[list[TimeSeries], list[str]]:
    """Univariate archive text format: one instance per line, ``label<TAB>v1,v2,...``.

    Values after the label may be comma- or tab-separated. Unparseable lines
    raise with their line number.
    """
    instances: list[TimeSeries] = []
    raw_labels: list[str] = []
    with open(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'label<TAB>values'")
            label, rest = line.split("\t", 1)
            tokens = rest.split(",") if "," in rest else rest.split("\t")
            values = np.array([_parse_float(t, path, line_no) for t in tokens])
            if values.size == 0:
                raise ValueError(f"{path}:{line_no}: no values")
            instances.append(TimeSeries.from_values(values, id=f"{Path(path).stem}#{line_no}"))
            raw_labels.append(label.strip())
    if not instances:
        raise ValueError(f"{path}: no instances")
    return instances, raw_labels


def load_ts_file(path: str | Path) -> tuple[list[TimeSeries], list[str] | None]:
    """Load the sktime-style ``.ts`` layout.

    Header lines start with ``@`` (``@problemName``, ``@univariate``,
    ``@classLabel``, ``@data``); data lines hold dimensions separated by
    ``:`` with an optional trailing class label. ``?`` marks missing values.
    """
    instances: list[TimeSeries] = []
    raw_labels: list[str] = []
    has_labels = False
    in_data = False
    with open(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("@"):
                if in_data:
                    raise ValueError(f"{path}:{line_no}: header tag after @data")
                tag, _, value = line.partition(" ")
                tag = tag.lower()
                if tag == "@classlabel":
                    has_labels = value.split()[0].lower() == "true"
                elif tag == "@data":
                    in_data = True
                continue
            if not in_data:
                raise ValueError(f"{path}:{line_no}: data before @data tag")
            fields = line.split(":")
            if has_labels:
                if len(fields) < 2:
                    raise ValueError(f"{path}:{line_no}: missing class label")
                *dims, label = fields
                raw_labels.append(label.strip())
            else:
                dims = fields
            columns = []
            for dim in dims:
                columns.append([_parse_float(t, path, line_no) for t in dim.split(",")])
            lengths = {len(c) for c in columns}
            if len(lengths) != 1:
                raise ValueError(f"{path}:{line_no}: dimensions have unequal lengths {sorted(lengths)}")
            values = np.array(columns).T
            instances.append(TimeSeries.from_values(values, id=f"{Path(path).stem}#{line_no}"))
    if not instances:
        raise ValueError(f"{path}: no instances")
    return instances, (raw_labels if has_labels else None)


def load_classification(
    train_path: str | Path,
    test_path: str | Path | None = None,
    fmt: str = "auto",
) -> Dataset:
    """Load a labeled archive dataset, tagging instances by source file."""
    if fmt == "auto":
        fmt = "ts" if str(train_path).endswith(".ts") else "tab"
    loader = load_ts_file if fmt == "ts" else load_labeled_lines
    train_instances, train_labels = loader(train_path)
    instances = list(train_instances)
    raw_labels = list(train_labels or [])
    splits = ["train"] * len(train_instances)
    if test_path is not None:
        test_instances, test_labels = loader(test_path)
        instances += test_instances
        raw_labels += list(test_labels or [])
        splits += ["test"] * len(test_instances)
    labels = None
    num_classes = None
    if raw_labels:
        classes = sorted(set(raw_labels), key=_label_sort_key)
        mapping = {c: i for i, c in enumerate(classes)}
        labels = np.array([mapping[label] for label in raw_labels])
        num_classes = len(classes)
    return Dataset(
        instances=instances,
        labels=labels,
        splits=np.array(splits, dtype=object),
        num_classes=num_classes,
    )


def _label_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)
