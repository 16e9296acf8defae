"""Downstream protocols over frozen representations: ridge-regression
forecasting with a validation-selected L2 penalty, RBF-kernel SVM
classification with a cross-validated penalty sweep, and table summaries
(averages and average ranks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import Ridge
from sklearn.model_selection import GridSearchCV, StratifiedKFold
from sklearn.svm import SVC

from .data import Dataset, LongSeries, NormStats, pad_to_length

RIDGE_GRID = (0.1, 1.0, 10.0, 100.0, 1000.0)
SVM_GRID = tuple(10.0**i for i in range(-4, 5)) + (1e8,)  # 1e8 stands in for "no penalty"


@dataclass(frozen=True)
class ForecastTask:
    """Sliding-window forecasting setup: context length, horizons, penalties."""

    context_length: int = 201
    horizons: tuple[int, ...] = (24, 48)
    univariate: bool = True
    ridge_grid: tuple[float, ...] = RIDGE_GRID

    def __post_init__(self):
        if self.context_length < 1:
            raise ValueError("context_length must be >= 1")
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be >= 1")


@dataclass(frozen=True)
class ForecastRow:
    dataset: str
    horizon: int
    mse: float
    mae: float
    alpha: float
    raw_mse: float | None = None
    raw_mae: float | None = None


@dataclass(frozen=True)
class ClassifyReport:
    dataset: str
    accuracy: float
    best_c: float


def identity_features(windows: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Encoder-bypass featurizer: the flattened raw window."""
    return windows.reshape(windows.shape[0], -1)


def _causal_windows(values: np.ndarray, mask: np.ndarray, ends: np.ndarray, lx: int):
    windows = np.stack([values[t - lx + 1 : t + 1] for t in ends])
    masks = np.stack([mask[t - lx + 1 : t + 1] for t in ends])
    return windows, masks


def forecast_eval(
    encode_fn,
    long: LongSeries,
    boundaries: tuple[int, int],
    task: ForecastTask,
    stats: NormStats | None = None,
    batch_hint: int = 256,
) -> list[ForecastRow]:
    """Frozen-representation forecasting over one long series.

    For every admissible timestamp ``t`` the causal window ending at ``t`` is
    encoded once; a ridge regression then maps the representation to the next
    ``h`` values for each horizon ``h``, with the penalty chosen on the
    validation region. Windows never read values after ``t``, and the
    regression never updates the encoder. Metrics are reported on the
    (normalized) scale of the series; pass ``stats`` to also report them on
    the raw scale.
    """
    values = long.series.values
    mask = long.series.mask
    total = values.shape[0]
    train_end, valid_end = boundaries
    lx = task.context_length
    max_h = max(task.horizons)
    if total - valid_end < max_h:
        raise ValueError(f"test region shorter than horizon {max_h}")

    ends = np.arange(lx - 1, total - 1)  # every t with a full causal window and a future
    features = encode_fn(*_causal_windows(values, mask, ends, lx))
    by_end = {int(t): i for i, t in enumerate(ends)}

    rows = []
    for horizon in task.horizons:
        # Targets stay inside their own region; causal windows may reach back
        # into earlier regions, which leaks nothing from the future.
        train_t = [t for t in range(lx - 1, train_end) if t + horizon < train_end]
        valid_t = [t for t in range(max(train_end, lx - 1), valid_end) if t + horizon < valid_end]
        test_t = [t for t in range(max(valid_end, lx - 1), total) if t + horizon < total]
        if not train_t or not test_t:
            raise ValueError(f"horizon {horizon}: empty train or test window set")

        def targets(ts):
            out = np.stack([values[t + 1 : t + 1 + horizon] for t in ts])
            return out.reshape(len(ts), -1)

        x_train, y_train = features[[by_end[t] for t in train_t]], targets(train_t)
        x_test, y_test = features[[by_end[t] for t in test_t]], targets(test_t)

        best_alpha, best_score = task.ridge_grid[0], np.inf
        if valid_t:
            x_valid, y_valid = features[[by_end[t] for t in valid_t]], targets(valid_t)
            for alpha in task.ridge_grid:
                model = Ridge(alpha=alpha).fit(x_train, y_train)
                score = float(np.mean((model.predict(x_valid) - y_valid) ** 2))
                if score < best_score:
                    best_alpha, best_score = alpha, score
        model = Ridge(alpha=best_alpha).fit(x_train, y_train)
        err = model.predict(x_test) - y_test
        raw_mse = raw_mae = None
        if stats is not None:
            raw_err = err * np.tile(stats.std, horizon)
            raw_mse = float(np.mean(raw_err**2))
            raw_mae = float(np.mean(np.abs(raw_err)))
        rows.append(
            ForecastRow(
                dataset=long.series.id,
                horizon=horizon,
                mse=float(np.mean(err**2)),
                mae=float(np.mean(np.abs(err))),
                alpha=float(best_alpha),
                raw_mse=raw_mse,
                raw_mae=raw_mae,
            )
        )
    return rows


def classify_eval(encode_fn, dataset: Dataset, name: str = "") -> ClassifyReport:
    """SVM-over-representations protocol on a labeled train/test dataset."""
    if dataset.labels is None:
        raise ValueError("classification evaluation needs labels")
    train_idx = dataset.indices_of("train")
    test_idx = dataset.indices_of("test")
    if train_idx.size == 0 or test_idx.size == 0:
        raise ValueError("need non-empty train and test splits")
    train_labels = dataset.labels[train_idx]
    if np.unique(train_labels).size < 2:
        raise ValueError("train split has a single class; SVM protocol undefined")

    target = dataset.max_length
    feats = {}
    for split_name, idx in (("train", train_idx), ("test", test_idx)):
        padded = [pad_to_length(dataset.instances[i], target) for i in idx]
        values = np.stack([p.values for p in padded])
        mask = np.stack([p.mask for p in padded])
        feats[split_name] = encode_fn(values, mask)

    smallest_class = np.bincount(train_labels).min()
    folds = int(min(5, smallest_class))
    svm = SVC(kernel="rbf")
    if folds >= 2:
        search = GridSearchCV(
            svm,
            {"C": list(SVM_GRID)},
            cv=StratifiedKFold(n_splits=folds),
            n_jobs=1,
        )
        search.fit(feats["train"], train_labels)
        model = search.best_estimator_
        best_c = float(search.best_params_["C"])
    else:
        model = SVC(kernel="rbf", C=1.0).fit(feats["train"], train_labels)
        best_c = 1.0
    accuracy = float(model.score(feats["test"], dataset.labels[test_idx]))
    return ClassifyReport(dataset=name, accuracy=accuracy, best_c=best_c)


@dataclass
class Summary:
    """Per-method averages and average ranks over a grid of result cells."""

    averages: dict[str, float] = field(default_factory=dict)
    avg_ranks: dict[str, float] = field(default_factory=dict)


def summarize(
    table: dict[str, dict[object, float]],
    higher_is_better: bool = False,
    missing_rank_value: float = 0.0,
) -> Summary:
    """Average metrics and average ranks across methods.

    Missing entries are excluded from a method's average. For ranks, a
    missing entry is scored as ``missing_rank_value`` (0 by convention for
    accuracy-style tables) so the method ranks last on that cell.
    """
    if not table:
        raise ValueError("empty results table")
    methods = list(table)
    cells = sorted({c for method in methods for c in table[method]}, key=str)
    summary = Summary()
    for method in methods:
        values = [table[method][c] for c in cells if c in table[method]]
        summary.averages[method] = float(np.mean(values)) if values else float("nan")
    rank_totals = {m: 0.0 for m in methods}
    for cell in cells:
        scores = []
        for method in methods:
            raw = table[method].get(cell)
            if raw is None:
                raw = missing_rank_value if higher_is_better else np.inf
            scores.append(raw if higher_is_better else -raw)
        # Rank 1 = best; ties share their average position.
        ranks = _tie_average([-s for s in scores])
        for method, rank in zip(methods, ranks):
            rank_totals[method] += rank
    for method in methods:
        summary.avg_ranks[method] = rank_totals[method] / len(cells)
    return summary


def _tie_average(keys: list[float]) -> list[float]:
    """1-based ranks with ties sharing their average position."""
    order = np.argsort(keys, kind="stable")
    ranks = np.empty(len(keys))
    i = 0
    position = 1
    keys_arr = np.asarray(keys)
    while i < len(keys):
        j = i
        while j + 1 < len(keys) and keys_arr[order[j + 1]] == keys_arr[order[i]]:
            j += 1
        avg = (position + position + (j - i)) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        position += j - i + 1
        i = j + 1
    return ranks.tolist()
