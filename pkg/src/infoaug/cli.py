"""Command-line entry points.

Verbs: ``fit`` (train on a dataset), ``eval-forecast`` / ``eval-classify``
(downstream protocols over a checkpoint), ``verify`` (brute-force property
suites), ``sweep`` (ablation or criteria grids), and ``plot``.

Exit codes: 0 on success, 1 on run failure or verification violation, 2 on
config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import infotheory
from .data import SplitSpec, load_classification, load_csv, normalize_long_series, normalize_zscore, split_long_series, window_dataset
from .evaluation import ForecastTask, classify_eval, forecast_eval
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ablation_sweep,
    criteria_sweep,
    plot_criteria_scatter,
    plot_policy_trajectory,
    resolve_data_path,
    run,
)
from .training import TrainConfig, TrainState, fit


def _add_fit_parser(sub) -> None:
    p = sub.add_parser("fit", help="train an encoder and selection policy")
    p.add_argument("--config", help="experiment YAML (overrides the flags below)")
    p.add_argument("--data", help="dataset path (csv, .ts, or tab file)")
    p.add_argument("--format", choices=("csv", "ts", "tab"), default="csv")
    p.add_argument("--target", help="target column for univariate csv mode")
    p.add_argument("--test-data", help="companion test file for ts/tab formats")
    p.add_argument("--mode", choices=("unsupervised", "supervised"), default="unsupervised")
    p.add_argument("--ablation", default="none",
                   help="none|random|all|all_sequential|no_fidelity|no_variety|single:<name>")
    p.add_argument("--augs", help="transform spec list, e.g. jitter:std=0.3,subsequence")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=256, help="training window for long csv series")
    p.add_argument("--out", default="runs/fit", help="output directory")


def _cmd_fit(args) -> int:
    if args.config:
        config = ExperimentConfig.from_yaml(args.config)
        run_id = run(config, force=True)
        print(f"run {run_id} completed under {config.out_dir}")
        return 0
    if not args.data:
        raise ConfigError("fit needs --data or --config")
    train_cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        alpha=args.alpha,
        beta=args.beta,
        mode=args.mode,
        ablation=args.ablation,
        seed=args.seed,
        augmentations=args.augs,
    )
    path = resolve_data_path(args.data)
    if args.format == "csv":
        long = load_csv(path, target=args.target)
        boundaries = split_long_series(long, SplitSpec())
        long, _ = normalize_long_series(long, boundaries[0])
        dataset = window_dataset(long, args.window, args.window // 2, end=boundaries[0])
    else:
        dataset = load_classification(path, args.test_data, fmt=args.format)
        dataset, _ = normalize_zscore(dataset)
    _, history = fit(dataset, train_cfg, out_dir=args.out)
    print(f"trained {args.epochs} epochs; artifacts in {args.out}")
    print(f"final contrastive loss {history.reports[-1].total_loss:.4f}")
    return 0


def _add_eval_forecast_parser(sub) -> None:
    p = sub.add_parser("eval-forecast", help="ridge forecasting over a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="csv file with the long series")
    p.add_argument("--target", help="target column for univariate mode")
    p.add_argument("--horizons", default="24,48,168,336")
    p.add_argument("--lx", type=int, default=201)
    p.add_argument("--split-mode", choices=("ratio", "calendar"), default="ratio")
    p.add_argument("--out", help="optional CSV output path")


def _cmd_eval_forecast(args) -> int:
    state = TrainState.load(args.checkpoint)
    long = load_csv(resolve_data_path(args.data), target=args.target)
    boundaries = split_long_series(long, SplitSpec(mode=args.split_mode))
    long, stats = normalize_long_series(long, boundaries[0])
    task = ForecastTask(
        context_length=args.lx,
        horizons=tuple(int(h) for h in args.horizons.split(",")),
        univariate=long.series.n_features == 1,
    )
    rows = forecast_eval(state.encode_windows, long, boundaries, task, stats=stats)
    print(f"{'horizon':>8} {'MSE':>10} {'MAE':>10} {'alpha':>8}")
    for row in rows:
        print(f"{row.horizon:>8} {row.mse:>10.4f} {row.mae:>10.4f} {row.alpha:>8g}")
    if args.out:
        with open(args.out, "w") as handle:
            handle.write("dataset,horizon,mse,mae,alpha\n")
            for row in rows:
                handle.write(f"{row.dataset},{row.horizon},{row.mse!r},{row.mae!r},{row.alpha}\n")
    return 0


def _add_eval_classify_parser(sub) -> None:
    p = sub.add_parser("eval-classify", help="SVM classification over a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="train file (.ts or tab)")
    p.add_argument("--test-data", help="test file; defaults to train/test in one file")
    p.add_argument("--format", choices=("ts", "tab"), default="ts")


def _cmd_eval_classify(args) -> int:
    state = TrainState.load(args.checkpoint)
    dataset = load_classification(
        resolve_data_path(args.data),
        resolve_data_path(args.test_data) if args.test_data else None,
        fmt=args.format,
    )
    dataset, _ = normalize_zscore(dataset)
    report = classify_eval(state.encode_windows, dataset, name=Path(args.data).stem)
    print(f"accuracy {report.accuracy:.4f} (svm C={report.best_c:g})")
    return 0


def _add_verify_parser(sub) -> None:
    p = sub.add_parser("verify", help="run brute-force verification suites")
    p.add_argument("--suite", choices=("properties", "concrete", "gradients", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)


def _verify_properties(seed: int, trials: int) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []
    for trial in range(trials):
        n_x = int(rng.integers(2, 17))
        n_y = int(rng.integers(2, 9))
        n_v = int(rng.integers(n_x, 65))
        joint = infotheory.random_joint(rng, n_x, n_y)
        channel = infotheory.random_disjoint_channel(rng, n_x, n_v)
        fidelity = infotheory.check_fidelity_preservation(joint, channel)
        gain = infotheory.check_information_gain(joint.sum(axis=1), channel)
        if not fidelity.ok:
            failures.append(f"trial {trial}: fidelity residual {fidelity.residual:.3e}")
        if not gain.ok:
            failures.append(f"trial {trial}: entropy residual {gain.residual:.3e}")
    # Negative control: overlapping supports must break the equality.
    joint = infotheory.random_joint(rng, 4, 3)
    overlap = infotheory.random_overlapping_channel(rng, 4, 6)
    control = infotheory.check_fidelity_preservation(joint, overlap)
    if control.disjoint_support or control.residual <= 1e-12:
        failures.append("negative control failed to violate the fidelity equality")
    return failures


def _verify_concrete(seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []
    n = 100_000
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        freq = infotheory.check_concrete_limit(p, tau=0.01, n_samples=n, rng=rng)
        margin = 3 * np.sqrt(p * (1 - p) / n)
        if abs(freq - p) > margin:
            failures.append(f"p={p}: empirical {freq:.4f} outside {p}+-{margin:.4f}")
    return failures


def _verify_gradients(seed: int) -> list[str]:
    from .gradcheck import criteria_of_logits_factory

    failures = []
    fn, logits0 = criteria_of_logits_factory(seed=seed)
    autodiff = fn.gradient(logits0)
    numeric = infotheory.finite_difference_gradient(fn, logits0, h=1e-4)
    rel = np.abs(autodiff - numeric) / np.maximum(np.abs(numeric), 1e-8)
    if rel.max() > 1e-3:
        failures.append(f"criteria gradient mismatch: max relative error {rel.max():.3e}")
    return failures


def _cmd_verify(args) -> int:
    suites = ("properties", "concrete", "gradients") if args.suite == "all" else (args.suite,)
    failures = []
    for suite in suites:
        if suite == "properties":
            failures += _verify_properties(args.seed, args.trials)
        elif suite == "concrete":
            failures += _verify_concrete(args.seed)
        else:
            failures += _verify_gradients(args.seed)
        status = "ok" if not failures else "FAILED"
        print(f"suite {suite}: {status}")
    for failure in failures:
        print(f"  {failure}", file=sys.stderr)
    return 1 if failures else 0


def _add_sweep_parser(sub) -> None:
    p = sub.add_parser("sweep", help="ablation or criteria sweeps from a base config")
    p.add_argument("--config", required=True, help="base experiment YAML")
    p.add_argument("--kind", choices=("ablation", "criteria"), default="ablation")
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", help="output CSV (and PNG for criteria sweeps)")


def _cmd_sweep(args) -> int:
    base = ExperimentConfig.from_yaml(args.config)
    if args.kind == "ablation":
        results = ablation_sweep(base, force=args.force)
        out = args.out or str(Path(base.out_dir) / "ablation.csv")
        metric_keys = sorted({k for m in results.values() for k in m if isinstance(m[k], (int, float))})
        with open(out, "w") as handle:
            handle.write("variant," + ",".join(metric_keys) + "\n")
            for variant, metrics in results.items():
                cells = ",".join(repr(metrics.get(k, "")) for k in metric_keys)
                handle.write(f"{variant},{cells}\n")
        print(f"ablation grid written to {out}")
        for variant, metrics in results.items():
            brief = {k: round(v, 4) for k, v in metrics.items() if isinstance(v, (int, float))}
            print(f"  {variant}: {brief}")
        return 0
    points = criteria_sweep(base, force=args.force)
    out = args.out or str(Path(base.out_dir) / "criteria_sweep")
    corr = plot_criteria_scatter(points, f"{out}.png", f"{out}.csv")
    label = "NA" if corr is None else f"{corr:.3f}"
    print(f"criteria sweep: {len(points)} configurations, spearman {label}")
    return 0


def _add_plot_parser(sub) -> None:
    p = sub.add_parser("plot", help="render figures from run artifacts")
    p.add_argument("--kind", choices=("policy", "criteria"), required=True)
    p.add_argument("--input", required=True, help="policy.csv or criteria sweep csv")
    p.add_argument("--out", required=True, help="output PNG path")


def _cmd_plot(args) -> int:
    if args.kind == "policy":
        plot_policy_trajectory(args.input, args.out)
    else:
        points = []
        with open(args.input) as handle:
            handle.readline()
            for line in handle:
                config, criteria_value, metric, run_id = line.strip().split(",")
                points.append(
                    {"config": config, "criteria": float(criteria_value), "metric": float(metric), "run_id": run_id}
                )
        plot_criteria_scatter(points, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="infoaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_fit_parser(sub)
    _add_eval_forecast_parser(sub)
    _add_eval_classify_parser(sub)
    _add_verify_parser(sub)
    _add_sweep_parser(sub)
    _add_plot_parser(sub)
    args = parser.parse_args(argv)
    command = {
        "fit": _cmd_fit,
        "eval-forecast": _cmd_eval_forecast,
        "eval-classify": _cmd_eval_classify,
        "verify": _cmd_verify,
        "sweep": _cmd_sweep,
        "plot": _cmd_plot,
    }[args.command]
    try:
        return command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
