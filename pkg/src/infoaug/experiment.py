"""Experiment orchestration: YAML configs, a flat-file results store with
advisory locking, end-to-end runs (fit then eval), sweeps, and plot emission
(criteria-vs-performance scatter, policy-weight trajectories, augmentation
example strips).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import yaml
from filelock import FileLock
from scipy.stats import spearmanr

from . import synthetic
from .augment import TransformSpec
from .data import (
    Dataset,
    LongSeries,
    SplitSpec,
    load_classification,
    load_csv,
    normalize_long_series,
    normalize_zscore,
    split_long_series,
    window_dataset,
)
from .evaluation import ForecastTask, classify_eval, forecast_eval
from .training import TrainConfig, TrainState, fit

DATA_ROOT_ENV = "INFOAUG_DATA_ROOT"


class ConfigError(ValueError):
    """Raised for malformed experiment configs (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    """One experiment: data source, training setup, evaluation setup."""

    name: str
    data: dict[str, Any]
    train: TrainConfig
    eval: dict[str, Any] = field(default_factory=lambda: {"kind": "none"})
    split: dict[str, Any] = field(default_factory=dict)
    out_dir: str = "runs"
    tags: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        try:
            train = TrainConfig(**raw.get("train", {}))
            return cls(
                name=raw["name"],
                data=dict(raw["data"]),
                train=train,
                eval=dict(raw.get("eval", {"kind": "none"})),
                split=dict(raw.get("split", {})),
                out_dir=raw.get("out_dir", "runs"),
                tags=tuple(raw.get("tags", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as handle:
            raw = yaml.safe_load(handle)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        train = dict(self.train.__dict__)
        if isinstance(train.get("augmentations"), list):
            train["augmentations"] = [
                {"name": s.name, "params": dict(s.params)} for s in train["augmentations"]
            ]
        return {
            "name": self.name,
            "data": self.data,
            "train": train,
            "eval": self.eval,
            "split": self.split,
            "out_dir": self.out_dir,
            "tags": list(self.tags),
        }

    def config_hash(self) -> str:
        payload = self.to_dict()
        payload.pop("out_dir")
        payload.pop("tags")
        canonical = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def resolve_data_path(path: str | Path) -> Path:
    """Absolute paths pass through; relative ones resolve against the data root."""
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root and (Path(root) / path).exists():
        return Path(root) / path
    return path


def _split_spec(raw: dict[str, Any]) -> SplitSpec:
    if not raw:
        return SplitSpec()
    kwargs = {}
    if "mode" in raw:
        kwargs["mode"] = raw["mode"]
    if "ratios" in raw:
        kwargs["ratios"] = tuple(raw["ratios"])
    if "calendar_months" in raw:
        kwargs["calendar_months"] = tuple(raw["calendar_months"])
    return SplitSpec(**kwargs)


@dataclass
class LoadedData:
    """Normalized data ready for training plus whatever evaluation needs."""

    train_dataset: Dataset
    long_series: LongSeries | None = None
    boundaries: tuple[int, int] | None = None
    stats: Any = None
    eval_dataset: Dataset | None = None


def load_experiment_data(config: ExperimentConfig) -> LoadedData:
    """Materialize the configured data source into normalized datasets."""
    data = config.data
    kind = data.get("kind")
    if kind == "synthetic_frequency":
        keys = ("n", "length", "noise", "freqs", "ratios", "seed")
        dataset = synthetic.frequency_classes(**{k: data[k] for k in keys if k in data})
        dataset, stats = normalize_zscore(dataset)
        return LoadedData(train_dataset=dataset, eval_dataset=dataset, stats=stats)
    if kind == "smoke":
        keys = ("n", "length", "seed")
        dataset = synthetic.smoke_dataset(**{k: data[k] for k in keys if k in data})
        dataset, stats = normalize_zscore(dataset)
        return LoadedData(train_dataset=dataset, eval_dataset=dataset, stats=stats)
    if kind == "csv":
        path = resolve_data_path(data["path"])
        if not path.exists():
            raise ConfigError(f"csv data file not found: {path}")
        long = load_csv(path, target=data.get("target"))
        boundaries = split_long_series(long, _split_spec(config.split))
        long, stats = normalize_long_series(long, boundaries[0])
        window = int(data.get("window", 256))
        stride = int(data.get("stride", window // 2))
        train_dataset = window_dataset(long, window, stride, start=0, end=boundaries[0])
        return LoadedData(
            train_dataset=train_dataset,
            long_series=long,
            boundaries=boundaries,
            stats=stats,
        )
    if kind in ("ts", "tab"):
        train_path = resolve_data_path(data["train_path"])
        test_path = resolve_data_path(data["test_path"]) if data.get("test_path") else None
        for p in (train_path, test_path):
            if p is not None and not p.exists():
                raise ConfigError(f"data file not found: {p}")
        dataset = load_classification(train_path, test_path, fmt=kind)
        dataset, stats = normalize_zscore(dataset)
        return LoadedData(train_dataset=dataset, eval_dataset=dataset, stats=stats)
    raise ConfigError(f"unknown data kind {kind!r}")


def evaluate(config: ExperimentConfig, state: TrainState, loaded: LoadedData) -> dict[str, Any]:
    """Run the configured downstream protocol on the trained encoder."""
    spec = config.eval
    kind = spec.get("kind", "none")
    if kind == "none":
        return {}
    if kind == "classification":
        if loaded.eval_dataset is None:
            raise ConfigError("classification eval needs an instance dataset")
        report = classify_eval(state.encode_windows, loaded.eval_dataset, name=config.name)
        return {"accuracy": report.accuracy, "svm_c": report.best_c}
    if kind == "forecast":
        if loaded.long_series is None or loaded.boundaries is None:
            raise ConfigError("forecast eval needs a long-series data source")
        task = ForecastTask(
            context_length=int(spec.get("lx", 201)),
            horizons=tuple(int(h) for h in spec.get("horizons", (24, 48))),
            univariate=loaded.long_series.series.n_features == 1,
        )
        rows = forecast_eval(
            state.encode_windows, loaded.long_series, loaded.boundaries, task, stats=loaded.stats
        )
        return {
            "rows": [
                {"horizon": r.horizon, "mse": r.mse, "mae": r.mae, "alpha": r.alpha}
                for r in rows
            ],
            "avg_mse": float(np.mean([r.mse for r in rows])),
            "avg_mae": float(np.mean([r.mae for r in rows])),
        }
    raise ConfigError(f"unknown eval kind {kind!r}")


class ResultsStore:
    """Append-only flat-file run index: one directory per run plus index.json."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"
        self.lock = FileLock(str(self.root / "index.lock"))

    def read_index(self) -> list[dict[str, Any]]:
        if not self.index_path.exists():
            return []
        with open(self.index_path) as handle:
            return json.load(handle)

    def find(self, config_hash: str) -> dict[str, Any] | None:
        for record in self.read_index():
            if record["hash"] == config_hash and record["status"] == "completed":
                return record
        return None

    def append(self, record: dict[str, Any]) -> None:
        with self.lock:
            records = self.read_index()
            records.append(record)
            with open(self.index_path, "w") as handle:
                json.dump(records, handle, indent=2)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id


def run(config: ExperimentConfig, force: bool = False) -> str:
    """Execute fit then eval, persisting artifacts under the results store.

    Re-running an identical config is skipped (the prior run id is returned)
    unless ``force`` is set. Failures keep partial artifacts and are recorded
    with status "failed".
    """
    store = ResultsStore(config.out_dir)
    run_id = config.config_hash()
    prior = store.find(run_id)
    if prior is not None and not force:
        return prior["run_id"]

    run_dir = store.run_dir(run_id)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.yaml", "w") as handle:
        yaml.safe_dump(config.to_dict(), handle, sort_keys=False)

    record = {
        "run_id": run_id,
        "hash": run_id,
        "name": config.name,
        "tags": list(config.tags),
        "started": time.time(),
        "status": "running",
    }
    try:
        loaded = load_experiment_data(config)
        state, history = fit(loaded.train_dataset, config.train, out_dir=run_dir)
        metrics = evaluate(config, state, loaded)
        metrics["final_criteria"] = history.epoch_mean(
            "criteria", last_n_steps=max(len(history.reports) // max(config.train.epochs, 1), 1)
        )
        metrics["final_contrastive"] = history.epoch_mean(
            "total_loss", last_n_steps=max(len(history.reports) // max(config.train.epochs, 1), 1)
        )
        with open(run_dir / "metrics.json", "w") as handle:
            json.dump(metrics, handle, indent=2)
        record.update(status="completed", finished=time.time(), metrics=metrics)
    except Exception:
        with open(run_dir / "error.txt", "w") as handle:
            handle.write(traceback.format_exc())
        record.update(status="failed", finished=time.time())
        store.append(record)
        raise
    store.append(record)
    return run_id


# ---------------------------------------------------------------------------
# Sweeps.
# ---------------------------------------------------------------------------

ABLATION_GRID = ("none", "random_aug", "all_aug", "no_fidelity", "no_variety")
ABLATION_LABELS = {
    "none": "adaptive",
    "random_aug": "random",
    "all_aug": "all",
    "no_fidelity": "w/o fidelity",
    "no_variety": "w/o variety",
}


def ablation_sweep(base: ExperimentConfig, force: bool = False) -> dict[str, dict[str, Any]]:
    """Run the adaptive method beside its fixed-gate and single-term variants."""
    results = {}
    for ablation in ABLATION_GRID:
        config = ExperimentConfig.from_dict(
            {
                **base.to_dict(),
                "name": f"{base.name}-{ablation}",
                "train": {**base.to_dict()["train"], "ablation": ablation},
            }
        )
        run_id = run(config, force=force)
        store = ResultsStore(config.out_dir)
        with open(store.run_dir(run_id) / "metrics.json") as handle:
            results[ABLATION_LABELS[ablation]] = json.load(handle)
    return results


def criteria_sweep(
    base: ExperimentConfig,
    subsequence_ratios: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9),
    jitter_stds: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0),
    force: bool = False,
) -> list[dict[str, Any]]:
    """Fixed single-augmentation sweep for the criteria-vs-performance scatter."""
    configs: list[TransformSpec] = [
        TransformSpec("subsequence", {"min_ratio": r, "max_ratio": r}) for r in subsequence_ratios
    ] + [TransformSpec("jitter", {"std": s}) for s in jitter_stds]
    points = []
    for spec in configs:
        config = ExperimentConfig.from_dict(
            {
                **base.to_dict(),
                "name": f"{base.name}-{spec.label()}",
                "train": {
                    **base.to_dict()["train"],
                    "ablation": f"single:{spec.name}",
                    "augmentations": [spec],
                },
            }
        )
        run_id = run(config, force=force)
        store = ResultsStore(config.out_dir)
        with open(store.run_dir(run_id) / "metrics.json") as handle:
            metrics = json.load(handle)
        metric = metrics.get("accuracy", metrics.get("avg_mse"))
        points.append(
            {
                "config": spec.label(),
                "criteria": metrics["final_criteria"],
                "metric": metric,
                "run_id": run_id,
            }
        )
    return points


# ---------------------------------------------------------------------------
# Plots.
# ---------------------------------------------------------------------------


def plot_criteria_scatter(
    points: list[dict[str, Any]], out_png: str | Path, out_csv: str | Path | None = None
) -> float | None:
    """Scatter of negated criteria against the downstream metric.

    Returns the Spearman rank correlation, or None when it is undefined
    (fewer than 2 distinct values on either axis).
    """
    if len(points) < 2:
        raise ValueError("need at least 2 configurations to plot")
    neg_criteria = [-p["criteria"] for p in points]
    metric = [p["metric"] for p in points]
    corr = None
    if len(set(neg_criteria)) > 1 and len(set(metric)) > 1:
        rho = spearmanr(neg_criteria, metric).statistic
        corr = None if np.isnan(rho) else float(rho)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(neg_criteria, metric)
    for p, x, y in zip(points, neg_criteria, metric):
        ax.annotate(p["config"], (x, y), fontsize=6, alpha=0.7)
    ax.set_xlabel("negated selection criteria")
    ax.set_ylabel("downstream metric")
    label = "NA" if corr is None else f"{corr:.3f}"
    ax.set_title(f"criteria vs performance (spearman {label})")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)

    if out_csv is not None:
        with open(out_csv, "w") as handle:
            handle.write("config,criteria,metric,run_id\n")
            for p in points:
                handle.write(f"{p['config']},{p['criteria']!r},{p['metric']!r},{p.get('run_id', '')}\n")
    return corr


def plot_policy_trajectory(policy_csv: str | Path, out_png: str | Path) -> None:
    """One line per transform: normalized selection weight against the epoch."""
    rows = []
    with open(policy_csv) as handle:
        handle.readline()  # header
        for line in handle:
            epoch, name, p, weight = line.strip().split(",")
            rows.append((int(epoch), name, float(p), float(weight)))
    if not rows:
        raise ValueError(f"{policy_csv}: no policy rows")
    names = sorted({r[1] for r in rows}, key=lambda n: [r[1] for r in rows].index(n))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names:
        series = [(r[0], r[3]) for r in rows if r[1] == name]
        series.sort()
        ax.plot([s[0] for s in series], [s[1] for s in series], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("normalized selection weight")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def plot_augmentation_examples(
    dataset: Dataset, out_png: str | Path, seed: int = 0
) -> None:
    """Strip of one instance under every candidate transform."""
    from .augment import apply_transform, registry

    rng = np.random.default_rng(seed)
    inst = dataset.instances[0]
    specs = registry()
    fig, axes = plt.subplots(2, 4, figsize=(12, 5))
    axes = axes.ravel()
    axes[0].plot(inst.values[:, 0], color="tab:blue")
    axes[0].set_title("original", fontsize=8)
    for ax, spec in zip(axes[1:], specs):
        out = apply_transform(spec, inst, rng)
        ax.plot(inst.values[:, 0], color="tab:blue", alpha=0.4)
        ax.plot(out.values[:, 0], color="tab:orange")
        ax.set_title(spec.name, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
