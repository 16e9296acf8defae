"""Experiment orchestration: configs, results store, runs, sweeps, plots."""

import json

import numpy as np
import pytest
import yaml

from infoaug.experiment import (
    ConfigError,
    ExperimentConfig,
    ResultsStore,
    load_experiment_data,
    plot_criteria_scatter,
    plot_policy_trajectory,
    run,
)


def _config_dict(tmp_path, **train_overrides):
    train = dict(
        epochs=2,
        batch_size=8,
        depth=2,
        channels=8,
        repr_dim=16,
        seed=0,
        augmentations="jitter,subsequence",
    )
    train.update(train_overrides)
    return {
        "name": "synthetic-smoke",
        "data": {"kind": "synthetic_frequency", "n": 40, "length": 64, "seed": 0},
        "train": train,
        "eval": {"kind": "classification"},
        "out_dir": str(tmp_path / "runs"),
    }


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "exp.yaml"
        with open(path, "w") as handle:
            yaml.safe_dump(_config_dict(tmp_path), handle)
        config = ExperimentConfig.from_yaml(path)
        assert config.name == "synthetic-smoke"
        assert config.train.epochs == 2

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = ExperimentConfig.from_dict(_config_dict(tmp_path))
        b = ExperimentConfig.from_dict(_config_dict(tmp_path))
        c = ExperimentConfig.from_dict(_config_dict(tmp_path, seed=1))
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_hash_ignores_out_dir(self, tmp_path):
        raw = _config_dict(tmp_path)
        a = ExperimentConfig.from_dict(raw)
        b = ExperimentConfig.from_dict({**raw, "out_dir": "elsewhere"})
        assert a.config_hash() == b.config_hash()

    def test_invalid_config_raises_config_error(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"name": "x", "data": {}, "train": {"mode": "nope"}})

    def test_unknown_data_kind(self, tmp_path):
        raw = _config_dict(tmp_path)
        raw["data"] = {"kind": "parquet"}
        with pytest.raises(ConfigError, match="unknown data kind"):
            load_experiment_data(ExperimentConfig.from_dict(raw))

    def test_missing_csv_path(self, tmp_path):
        raw = _config_dict(tmp_path)
        raw["data"] = {"kind": "csv", "path": str(tmp_path / "nope.csv")}
        with pytest.raises(ConfigError, match="not found"):
            load_experiment_data(ExperimentConfig.from_dict(raw))


class TestRun:
    def test_run_produces_artifacts_and_metrics(self, tmp_path):
        config = ExperimentConfig.from_dict(_config_dict(tmp_path))
        run_id = run(config)
        run_dir = ResultsStore(config.out_dir).run_dir(run_id)
        for name in ("config.yaml", "losses.csv", "policy.csv", "checkpoint.pt", "metrics.json"):
            assert (run_dir / name).exists(), name
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert np.isfinite(metrics["final_criteria"])

    def test_rerun_same_config_skipped(self, tmp_path):
        config = ExperimentConfig.from_dict(_config_dict(tmp_path))
        first = run(config)
        index_after_first = ResultsStore(config.out_dir).read_index()
        second = run(config)
        assert first == second
        assert len(ResultsStore(config.out_dir).read_index()) == len(index_after_first)

    def test_force_rerun_appends(self, tmp_path):
        config = ExperimentConfig.from_dict(_config_dict(tmp_path))
        run(config)
        run(config, force=True)
        index = ResultsStore(config.out_dir).read_index()
        assert len(index) == 2

    def test_failed_run_recorded_with_partial_artifacts(self, tmp_path):
        raw = _config_dict(tmp_path)
        raw["eval"] = {"kind": "forecast"}  # no long series -> stage failure
        config = ExperimentConfig.from_dict(raw)
        with pytest.raises(ConfigError):
            run(config)
        store = ResultsStore(config.out_dir)
        index = store.read_index()
        assert index[-1]["status"] == "failed"
        run_dir = store.run_dir(config.config_hash())
        assert (run_dir / "error.txt").exists()
        assert (run_dir / "losses.csv").exists()  # fit completed before eval failed


class TestPlots:
    def test_scatter_requires_two_points(self, tmp_path):
        with pytest.raises(ValueError):
            plot_criteria_scatter([{"config": "a", "criteria": 1.0, "metric": 0.5}], tmp_path / "x.png")

    def test_scatter_correlation_na_for_degenerate_points(self, tmp_path):
        points = [
            {"config": "a", "criteria": 1.0, "metric": 0.5},
            {"config": "b", "criteria": 1.0, "metric": 0.5},
        ]
        corr = plot_criteria_scatter(points, tmp_path / "x.png", tmp_path / "x.csv")
        assert corr is None
        assert (tmp_path / "x.png").exists()

    def test_scatter_csv_row_count(self, tmp_path):
        points = [
            {"config": f"c{i}", "criteria": float(i), "metric": float(-i), "run_id": "r"}
            for i in range(5)
        ]
        corr = plot_criteria_scatter(points, tmp_path / "s.png", tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().strip().splitlines()
        assert len(lines) == 6
        # Negated criteria -i against metric -i: perfect positive rank agreement.
        assert corr == pytest.approx(1.0)

    def test_policy_trajectory_flat_for_untrained_policy(self, tmp_path):
        from infoaug.synthetic import frequency_classes
        from infoaug.data import normalize_zscore
        from infoaug.training import TrainConfig, fit

        ds, _ = normalize_zscore(frequency_classes(n=24, length=32, seed=0))
        config = TrainConfig(
            epochs=3, batch_size=8, depth=2, channels=8, repr_dim=8,
            ablation="random_aug", augmentations="jitter,scaling,cutout",
        )
        fit(ds, config, out_dir=tmp_path)
        rows = (tmp_path / "policy.csv").read_text().strip().splitlines()[1:]
        weights = [float(line.split(",")[3]) for line in rows]
        np.testing.assert_allclose(weights, 1 / 3, atol=1e-12)
        plot_policy_trajectory(tmp_path / "policy.csv", tmp_path / "policy.png")
        assert (tmp_path / "policy.png").exists()

    def test_policy_weights_sum_to_one_per_epoch(self, tmp_path):
        from infoaug.synthetic import frequency_classes
        from infoaug.data import normalize_zscore
        from infoaug.training import TrainConfig, fit

        ds, _ = normalize_zscore(frequency_classes(n=24, length=32, seed=0))
        config = TrainConfig(
            epochs=2, batch_size=8, depth=2, channels=8, repr_dim=8, meta_lr=0.05,
            augmentations="jitter,scaling,cutout",
        )
        fit(ds, config, out_dir=tmp_path)
        rows = (tmp_path / "policy.csv").read_text().strip().splitlines()[1:]
        by_epoch = {}
        for line in rows:
            epoch, _, _, weight = line.split(",")
            by_epoch.setdefault(int(epoch), []).append(float(weight))
        for epoch, weights in by_epoch.items():
            assert sum(weights) == pytest.approx(1.0, abs=1e-9)
