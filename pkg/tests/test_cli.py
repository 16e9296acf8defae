"""CLI surface: verbs, exit codes, and artifact emission."""

import numpy as np
import pytest
import yaml

from infoaug.cli import main
from infoaug.synthetic import seasonal_series


@pytest.fixture
def csv_file(tmp_path):
    long = seasonal_series(length=900, seed=0)
    path = tmp_path / "series.csv"
    with open(path, "w") as handle:
        handle.write("y\n")
        for v in long.series.values[:, 0]:
            handle.write(f"{v}\n")
    return path


@pytest.fixture
def ts_files(tmp_path):
    rng = np.random.default_rng(0)
    paths = {}
    for split in ("TRAIN", "TEST"):
        lines = ["@problemName toy", "@univariate true", "@classLabel true a b", "@data"]
        for i in range(12):
            label = "a" if i % 2 == 0 else "b"
            level = -1.0 if label == "a" else 1.0
            wave = level + rng.normal(0, 0.1, size=24)
            lines.append(",".join(f"{v:.4f}" for v in wave) + f":{label}")
        path = tmp_path / f"toy_{split}.ts"
        path.write_text("\n".join(lines) + "\n")
        paths[split] = path
    return paths


class TestVerify:
    def test_all_suites_pass(self):
        assert main(["verify", "--suite", "all", "--seed", "0", "--trials", "50"]) == 0

    def test_properties_suite(self):
        assert main(["verify", "--suite", "properties", "--trials", "25"]) == 0

    def test_concrete_suite(self):
        assert main(["verify", "--suite", "concrete"]) == 0

    def test_gradients_suite(self):
        assert main(["verify", "--suite", "gradients"]) == 0


class TestFit:
    def test_fit_csv(self, csv_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(
            [
                "fit", "--data", str(csv_file), "--format", "csv",
                "--epochs", "1", "--batch-size", "4", "--window", "64",
                "--augs", "jitter,subsequence", "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "losses.csv").exists()
        assert (out / "checkpoint.pt").exists()
        assert "trained 1 epochs" in capsys.readouterr().out

    def test_fit_requires_data(self):
        assert main(["fit", "--epochs", "1"]) == 2

    def test_fit_with_experiment_config(self, tmp_path, capsys):
        config = {
            "name": "cli-smoke",
            "data": {"kind": "synthetic_frequency", "n": 24, "length": 32, "seed": 0},
            "train": {
                "epochs": 1, "batch_size": 8, "depth": 2, "channels": 8,
                "repr_dim": 8, "augmentations": "jitter,subsequence",
            },
            "eval": {"kind": "classification"},
            "out_dir": str(tmp_path / "runs"),
        }
        path = tmp_path / "exp.yaml"
        with open(path, "w") as handle:
            yaml.safe_dump(config, handle)
        assert main(["fit", "--config", str(path)]) == 0
        assert "completed" in capsys.readouterr().out

    def test_bad_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("name: x\ndata: {}\ntrain: {mode: bogus}\n")
        assert main(["fit", "--config", str(path)]) == 2


class TestEvalVerbs:
    def test_forecast_and_classify_round_trip(self, csv_file, ts_files, tmp_path, capsys):
        out = tmp_path / "out"
        main(
            [
                "fit", "--data", str(csv_file), "--epochs", "1", "--batch-size", "4",
                "--window", "64", "--augs", "jitter,subsequence", "--out", str(out),
            ]
        )
        capsys.readouterr()
        code = main(
            [
                "eval-forecast", "--checkpoint", str(out / "checkpoint.pt"),
                "--data", str(csv_file), "--horizons", "12,24", "--lx", "32",
                "--out", str(tmp_path / "forecast.csv"),
            ]
        )
        assert code == 0
        assert "MSE" in capsys.readouterr().out
        assert (tmp_path / "forecast.csv").read_text().count("\n") == 3

        # A checkpoint trained on univariate windows also encodes the toy
        # univariate archive instances.
        code = main(
            [
                "eval-classify", "--checkpoint", str(out / "checkpoint.pt"),
                "--data", str(ts_files["TRAIN"]), "--test-data", str(ts_files["TEST"]),
                "--format", "ts",
            ]
        )
        assert code == 0
        assert "accuracy" in capsys.readouterr().out

    def test_missing_checkpoint_is_run_failure(self, csv_file):
        code = main(
            ["eval-forecast", "--checkpoint", "nope.pt", "--data", str(csv_file)]
        )
        assert code == 1


class TestPlotVerb:
    def test_plot_policy(self, tmp_path):
        policy_csv = tmp_path / "policy.csv"
        policy_csv.write_text(
            "epoch,transform,p,normalized_weight\n"
            "1,jitter,0.5,0.5\n1,cutout,0.5,0.5\n"
            "2,jitter,0.6,0.6\n2,cutout,0.4,0.4\n"
        )
        out = tmp_path / "policy.png"
        assert main(["plot", "--kind", "policy", "--input", str(policy_csv), "--out", str(out)]) == 0
        assert out.exists()

    def test_plot_criteria(self, tmp_path):
        sweep_csv = tmp_path / "sweep.csv"
        sweep_csv.write_text(
            "config,criteria,metric,run_id\na,1.0,0.9,r1\nb,2.0,0.7,r2\nc,3.0,0.5,r3\n"
        )
        out = tmp_path / "scatter.png"
        assert main(["plot", "--kind", "criteria", "--input", str(sweep_csv), "--out", str(out)]) == 0
        assert out.exists()


class TestSweepVerb:
    def test_ablation_sweep(self, tmp_path, capsys):
        config = {
            "name": "sweep-smoke",
            "data": {"kind": "synthetic_frequency", "n": 24, "length": 32, "seed": 0},
            "train": {
                "epochs": 1, "batch_size": 8, "depth": 2, "channels": 8,
                "repr_dim": 8, "mode": "supervised",
                "augmentations": "jitter,subsequence",
            },
            "eval": {"kind": "classification"},
            "out_dir": str(tmp_path / "runs"),
        }
        path = tmp_path / "exp.yaml"
        with open(path, "w") as handle:
            yaml.safe_dump(config, handle)
        out = tmp_path / "ablation.csv"
        assert main(["sweep", "--config", str(path), "--kind", "ablation", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 6  # header + 5 variants
        assert "adaptive" in lines[1]
