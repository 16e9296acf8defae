"""Downstream protocols: ridge forecasting, SVM classification, summaries."""

import numpy as np
import pytest

from infoaug.data import Dataset, SplitSpec, TimeSeries, normalize_long_series, split_long_series
from infoaug.evaluation import (
    ForecastTask,
    _causal_windows,
    classify_eval,
    forecast_eval,
    identity_features,
    summarize,
)
from infoaug.synthetic import linear_ramp_series, seasonal_series


class TestForecast:
    def test_linear_ramp_recovered_by_identity_features(self):
        long = linear_ramp_series(length=1200)
        boundaries = split_long_series(long, SplitSpec())
        normalized, _ = normalize_long_series(long, boundaries[0])
        task = ForecastTask(context_length=50, horizons=(24,))
        (row,) = forecast_eval(identity_features, normalized, boundaries, task)
        assert row.mse < 1e-6

    def test_causal_windows_never_read_future(self):
        long = seasonal_series(length=400, seed=0)
        values = long.series.values
        ends = np.arange(49, 399)
        windows, _ = _causal_windows(values, long.series.mask, ends, 50)
        for i, t in enumerate(ends[:20]):
            np.testing.assert_array_equal(windows[i], values[t - 49 : t + 1])

    def test_future_perturbation_leaves_earlier_windows_unchanged(self):
        long = seasonal_series(length=400, seed=1)
        values = long.series.values.copy()
        ends = np.arange(49, 399)
        base, _ = _causal_windows(values, long.series.mask, ends, 50)
        perturbed_values = values.copy()
        t_star = 300
        perturbed_values[t_star] += 100.0
        shifted, _ = _causal_windows(perturbed_values, long.series.mask, ends, 50)
        for i, t in enumerate(ends):
            if t < t_star:
                np.testing.assert_array_equal(shifted[i], base[i])
            elif t - 49 <= t_star <= t:
                assert not np.array_equal(shifted[i], base[i])

    def test_short_test_region_rejected(self):
        long = seasonal_series(length=300)
        task = ForecastTask(context_length=20, horizons=(100,))
        with pytest.raises(ValueError, match="test region"):
            forecast_eval(identity_features, long, (200, 290), task)

    def test_deterministic(self):
        long = seasonal_series(length=600, seed=2)
        boundaries = split_long_series(long, SplitSpec())
        normalized, _ = normalize_long_series(long, boundaries[0])
        task = ForecastTask(context_length=30, horizons=(12, 24))
        rows_a = forecast_eval(identity_features, normalized, boundaries, task)
        rows_b = forecast_eval(identity_features, normalized, boundaries, task)
        assert rows_a == rows_b

    def test_raw_scale_metrics(self):
        long = seasonal_series(length=600, seed=3)
        boundaries = split_long_series(long, SplitSpec())
        normalized, stats = normalize_long_series(long, boundaries[0])
        task = ForecastTask(context_length=30, horizons=(12,))
        (row,) = forecast_eval(identity_features, normalized, boundaries, task, stats=stats)
        assert row.raw_mse == pytest.approx(row.mse * float(stats.std[0]) ** 2, rel=1e-9)


def _separable_dataset(n_per_class=12, length=30, seed=0):
    rng = np.random.default_rng(seed)
    instances, labels, splits = [], [], []
    for cls, level in ((0, -1.0), (1, 1.0)):
        for i in range(n_per_class):
            wave = level + rng.normal(0, 0.05, size=length)
            instances.append(TimeSeries.from_values(wave, id=f"c{cls}#{i}"))
            labels.append(cls)
            splits.append("train" if i < n_per_class // 2 else "test")
    return Dataset(
        instances=instances,
        labels=np.array(labels),
        splits=np.array(splits, dtype=object),
        num_classes=2,
    )


class TestClassify:
    def test_separable_representations_reach_perfect_accuracy(self):
        ds = _separable_dataset()
        report = classify_eval(identity_features, ds, name="separable")
        assert report.accuracy == 1.0

    def test_single_class_train_split_rejected(self):
        ds = _separable_dataset()
        ds.labels[:] = 0
        with pytest.raises(ValueError, match="single class"):
            classify_eval(identity_features, ds)

    def test_penalty_grid_contains_hard_margin_stand_in(self):
        from infoaug.evaluation import SVM_GRID

        assert 1e-4 in SVM_GRID and 1e4 in SVM_GRID and 1e8 in SVM_GRID
        assert len(SVM_GRID) == 10


class TestSummarize:
    def test_singleton(self):
        summary = summarize({"m": {"a": 0.5}})
        assert summary.averages["m"] == 0.5
        assert summary.avg_ranks["m"] == 1.0

    def test_two_methods_ranked(self):
        summary = summarize({"fast": {"d": 0.1}, "slow": {"d": 0.2}})
        assert summary.avg_ranks["fast"] == 1.0
        assert summary.avg_ranks["slow"] == 2.0

    def test_ties_share_average_rank(self):
        summary = summarize({"a": {"d": 0.1}, "b": {"d": 0.1}, "c": {"d": 0.3}})
        assert summary.avg_ranks["a"] == 1.5
        assert summary.avg_ranks["b"] == 1.5
        assert summary.avg_ranks["c"] == 3.0

    def test_missing_entries_excluded_from_average(self):
        summary = summarize(
            {"full": {"a": 0.2, "b": 0.4}, "partial": {"a": 0.1}},
            higher_is_better=True,
        )
        assert summary.averages["partial"] == pytest.approx(0.1)
        # Missing cell scores 0 for ranking, so "partial" ranks last on b.
        assert summary.avg_ranks["partial"] == pytest.approx((2 + 2) / 2)

    def test_reproduces_published_forecast_average(self):
        # 19 univariate forecasting cells (4 datasets x horizons); their mean
        # must reproduce the published average row: MSE 0.154, MAE 0.253.
        mse = {
            ("etth1", 24): 0.039, ("etth1", 48): 0.056, ("etth1", 168): 0.100,
            ("etth1", 336): 0.117, ("etth1", 720): 0.141,
            ("etth2", 24): 0.081, ("etth2", 48): 0.115, ("etth2", 168): 0.171,
            ("etth2", 336): 0.183, ("etth2", 720): 0.194,
            ("ettm1", 24): 0.014, ("ettm1", 48): 0.025, ("ettm1", 96): 0.036,
            ("ettm1", 288): 0.071, ("ettm1", 672): 0.102,
            ("electricity", 24): 0.245, ("electricity", 48): 0.294,
            ("electricity", 168): 0.402, ("electricity", 336): 0.533,
        }
        mae = {
            ("etth1", 24): 0.149, ("etth1", 48): 0.179, ("etth1", 168): 0.239,
            ("etth1", 336): 0.264, ("etth1", 720): 0.302,
            ("etth2", 24): 0.215, ("etth2", 48): 0.261, ("etth2", 168): 0.327,
            ("etth2", 336): 0.341, ("etth2", 720): 0.357,
            ("ettm1", 24): 0.087, ("ettm1", 48): 0.117, ("ettm1", 96): 0.142,
            ("ettm1", 288): 0.200, ("ettm1", 672): 0.240,
            ("electricity", 24): 0.269, ("electricity", 48): 0.301,
            ("electricity", 168): 0.367, ("electricity", 336): 0.453,
        }
        assert round(summarize({"ours": mse}).averages["ours"], 3) == 0.154
        assert round(summarize({"ours": mae}).averages["ours"], 3) == 0.253

    def test_reproduces_published_classification_average(self):
        # 30 multivariate-archive accuracies; mean must round to 0.714.
        acc = [
            0.987, 0.200, 0.975, 0.974, 0.986, 0.540, 0.733, 0.971, 0.949, 0.281,
            0.534, 0.630, 0.392, 0.452, 0.722, 0.984, 0.883, 0.591, 0.630, 0.933,
            0.751, 0.990, 0.249, 0.855, 0.874, 0.578, 0.947, 0.467, 0.884, 0.470,
        ]
        table = {"ours": {i: a for i, a in enumerate(acc)}}
        assert round(summarize(table, higher_is_better=True).averages["ours"], 3) == 0.714

    def test_empty_table_rejected(self):
        with pytest.raises(ValueError):
            summarize({})
