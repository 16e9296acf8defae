"""Synthetic benchmarks for desk-scale verification.

The frequency benchmark plants class structure in the dominant frequency of a
noisy sinusoid. For that construction the candidate set below has known
semantics: keeping a random window in place preserves the local frequency
(class-preserving), while stretching a half-length window doubles the period
and maps one class onto the other, and heavy noise drowns the signal
(label-destroying by construction).
"""

from __future__ import annotations

import numpy as np

from .augment import TransformSpec
from .data import Dataset, LongSeries, TimeSeries, split_by_ratio

# Class 1 runs at exactly twice class 0's frequency, so stretching a
# half-length window (frequency halving) collides the classes.
FREQ_CLASSES = (4.0, 8.0)

PRESERVING_SPEC = TransformSpec("subsequence", {"min_ratio": 0.5})
COLLIDING_SPEC = TransformSpec("window_slice", {"ratio": 0.5})
DROWNING_SPEC = TransformSpec("jitter", {"std": 5.0})


def frequency_classes(
    n: int = 200,
    length: int = 128,
    noise: float = 0.2,
    freqs: tuple[float, float] = FREQ_CLASSES,
    ratios: tuple[float, float, float] = (0.5, 0.25, 0.25),
    seed: int = 0,
) -> Dataset:
    """Two-class benchmark: noisy sinusoids at class-specific frequencies.

    Phases are uniform and amplitudes jitter around 1, so instances within a
    class vary while the dominant frequency stays the class signature.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length) / length
    labels = np.arange(n) % len(freqs)  # balanced by construction
    instances = []
    for i in range(n):
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.uniform(0.8, 1.2)
        wave = amplitude * np.sin(2 * np.pi * freqs[labels[i]] * t + phase)
        wave = wave + rng.normal(0.0, noise, size=length)
        instances.append(TimeSeries.from_values(wave, id=f"synth#{i}"))
    splits = _stratified_split(labels, ratios, seed=seed + 1)
    return Dataset(
        instances=instances,
        labels=labels,
        splits=splits,
        num_classes=len(freqs),
    )


def _stratified_split(labels: np.ndarray, ratios, seed: int) -> np.ndarray:
    """Per-class split assignment so every split sees every class."""
    rng = np.random.default_rng(seed)
    tags = np.empty(len(labels), dtype=object)
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        class_tags = split_by_ratio(len(idx), ratios)
        tags[idx] = class_tags
    return tags


def smoke_dataset(n: int = 200, length: int = 128, seed: int = 0) -> Dataset:
    """Small unlabeled dataset for pipeline smoke runs."""
    dataset = frequency_classes(n=n, length=length, seed=seed)
    return Dataset(
        instances=dataset.instances,
        labels=None,
        splits=dataset.splits,
        num_classes=None,
    )


def linear_ramp_series(length: int = 1200, slope: float = 1.0) -> LongSeries:
    """A perfectly linear univariate series for regression sanity checks."""
    values = slope * np.arange(length, dtype=np.float64)
    return LongSeries(series=TimeSeries.from_values(values, id="ramp"), feature_names=("ramp",))


def seasonal_series(
    length: int = 2000,
    period: float = 24.0,
    trend: float = 0.001,
    noise: float = 0.05,
    seed: int = 0,
) -> LongSeries:
    """A seasonal + trend + noise series for forecasting smoke tests."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    values = np.sin(2 * np.pi * t / period) + trend * t + rng.normal(0, noise, size=length)
    return LongSeries(series=TimeSeries.from_values(values, id="seasonal"), feature_names=("y",))
