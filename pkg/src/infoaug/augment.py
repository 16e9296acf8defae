"""Candidate augmentations: seven pure, seeded, shape-preserving transforms on
single series instances, plus the ordered registry that defines the candidate
set the selection policy learns over.

All transforms map ``TimeSeries -> TimeSeries`` with the same ``[T, F]`` shape
and are deterministic given an RNG stream. Degenerate parameters (std 0,
ratio 1, unit scales) reduce every transform to the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .data import TimeSeries


@dataclass(frozen=True)
class RngStream:
    """A named substream: the same (seed, stream) always yields the same draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.stream]))


@dataclass(frozen=True)
class TransformSpec:
    """Name and parameter overrides for one candidate transform."""

    name: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.name!r}")
        defaults = DEFAULT_PARAMS[self.name]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"{self.name}: unknown parameters {sorted(unknown)}")
        object.__setattr__(self, "params", dict(self.params))

    def resolved(self) -> dict[str, float]:
        merged = dict(DEFAULT_PARAMS[self.name])
        merged.update(self.params)
        return merged

    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}({inner})"


def _interp_columns(positions: np.ndarray, xp: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty((positions.size, values.shape[1]))
    for f in range(values.shape[1]):
        out[:, f] = np.interp(positions, xp, values[:, f])
    return out


def jitter(x: TimeSeries, rng: np.random.Generator, std: float = 0.3) -> TimeSeries:
    """Add elementwise Gaussian noise to the observed entries."""
    if std < 0:
        raise ValueError("std must be >= 0")
    noise = rng.normal(0.0, std, size=x.values.shape) if std > 0 else 0.0
    values = np.where(x.mask, x.values + noise, x.values)
    return TimeSeries(values=values, mask=x.mask, id=x.id)


def scaling(
    x: TimeSeries, rng: np.random.Generator, std: float = 0.5, mean: float = 1.0
) -> TimeSeries:
    """Multiply the whole instance by one Gaussian scalar.

    The factor is drawn from Normal(mean, std). The default unit mean keeps
    the signal recognizable; mean=0 reproduces the zero-centered draw some
    augmentation suites use, which usually shrinks or sign-flips the series.
    """
    if std < 0:
        raise ValueError("std must be >= 0")
    factor = rng.normal(mean, std) if std > 0 else mean
    return TimeSeries(values=x.values * factor, mask=x.mask, id=x.id)


def cutout(x: TimeSeries, rng: np.random.Generator, ratio: float = 0.1) -> TimeSeries:
    """Zero all features at ceil(ratio * T) uniformly sampled timestamps."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    t = x.length
    count = math.ceil(ratio * t)
    chosen = rng.choice(t, size=count, replace=False)
    values = x.values.copy()
    values[chosen] = 0.0
    return TimeSeries(values=values, mask=x.mask, id=x.id)


def time_warp(
    x: TimeSeries,
    rng: np.random.Generator,
    n_changes: int = 100,
    max_ratio: float = 10.0,
) -> TimeSeries:
    """Randomly change the speed of the timeline.

    A piecewise-constant speed curve with ``n_changes`` change points (clamped
    to T - 1) re-times the series; speeds are log-uniform with max/min ratio
    at most ``max_ratio`` and the total duration is preserved, so the output
    is resampled back to length T by linear interpolation.
    """
    if x.length < 2:
        raise ValueError("time_warp needs T >= 2")
    if max_ratio < 1:
        raise ValueError("max_ratio must be >= 1")
    t = x.length
    n_segments = min(n_changes, t - 1) + 1
    half = 0.5 * math.log(max_ratio)
    speeds = np.exp(rng.uniform(-half, half, size=n_segments))
    # Change points on the continuous timeline [0, T-1].
    cuts = np.sort(rng.uniform(0.0, t - 1.0, size=n_segments - 1))
    bounds = np.concatenate(([0.0], cuts, [t - 1.0]))
    seg_durations = np.diff(bounds) * speeds
    cum = np.concatenate(([0.0], np.cumsum(seg_durations)))
    total = cum[-1]
    if total <= 0:
        return x
    grid = np.arange(t, dtype=np.float64)
    seg_idx = np.clip(np.searchsorted(bounds, grid, side="right") - 1, 0, n_segments - 1)
    warped = cum[seg_idx] + (grid - bounds[seg_idx]) * speeds[seg_idx]
    source = warped / total * (t - 1.0)
    values = _interp_columns(source, grid, x.values)
    return TimeSeries(values=values, mask=x.mask, id=x.id)


def window_slice(x: TimeSeries, rng: np.random.Generator, ratio: float = 0.5) -> TimeSeries:
    """Crop a contiguous window and stretch it back to the original length."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    t = x.length
    w = int(ratio * t)
    if w < 2:
        raise ValueError(f"window of {w} timestamps is too short to interpolate")
    if w == t:
        return x
    start = rng.integers(0, t - w + 1)
    source = np.linspace(start, start + w - 1, num=t)
    values = _interp_columns(source, np.arange(t, dtype=np.float64), x.values)
    return TimeSeries(values=values, mask=x.mask, id=x.id)


def window_warp(
    x: TimeSeries,
    rng: np.random.Generator,
    ratio: float = 0.3,
    scales: tuple[float, ...] = (0.5, 2.0),
) -> TimeSeries:
    """Time-scale one contiguous window by a factor drawn from ``scales``,
    then interpolate the whole series back to the original length."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    t = x.length
    w = max(int(ratio * t), 2)
    start = int(rng.integers(0, t - w + 1))
    scale = scales[int(rng.integers(0, len(scales)))]
    grid = np.arange(t, dtype=np.float64)
    window_len = max(int(round(w * scale)), 2)
    window_pos = np.linspace(start, start + w - 1, num=window_len)
    warped_positions = np.concatenate([grid[:start], window_pos, grid[start + w :]])
    warped = _interp_columns(warped_positions, grid, x.values)
    source = np.linspace(0, warped_positions.size - 1, num=t)
    values = _interp_columns(source, np.arange(warped_positions.size, dtype=np.float64), warped)
    return TimeSeries(values=values, mask=x.mask, id=x.id)


def subsequence(
    x: TimeSeries,
    rng: np.random.Generator,
    min_ratio: float = 0.1,
    max_ratio: float = 1.0,
) -> TimeSeries:
    """Keep one random contiguous window in place; zero and mask out the rest.

    The window stays at its original timestamps so convex combinations with
    the source series remain temporally aligned. Window length is uniform in
    [ceil(min_ratio * T), floor(max_ratio * T)].
    """
    if not 0 < min_ratio <= max_ratio <= 1:
        raise ValueError("need 0 < min_ratio <= max_ratio <= 1")
    t = x.length
    lo = max(math.ceil(min_ratio * t), 1)
    hi = max(int(max_ratio * t), lo)
    w = int(rng.integers(lo, hi + 1))
    if w >= t:
        return x
    start = int(rng.integers(0, t - w + 1))
    values = np.zeros_like(x.values)
    values[start : start + w] = x.values[start : start + w]
    mask = np.zeros_like(x.mask)
    mask[start : start + w] = x.mask[start : start + w]
    return TimeSeries(values=values, mask=mask, id=x.id)


TRANSFORMS: dict[str, Callable] = {
    "jitter": jitter,
    "scaling": scaling,
    "cutout": cutout,
    "time_warp": time_warp,
    "window_slice": window_slice,
    "window_warp": window_warp,
    "subsequence": subsequence,
}

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "jitter": {"std": 0.3},
    "scaling": {"std": 0.5, "mean": 1.0},
    "cutout": {"ratio": 0.1},
    "time_warp": {"n_changes": 100, "max_ratio": 10.0},
    "window_slice": {"ratio": 0.5},
    "window_warp": {"ratio": 0.3, "scales": (0.5, 2.0)},
    "subsequence": {"min_ratio": 0.1, "max_ratio": 1.0},
}

DEFAULT_ORDER = (
    "jitter",
    "scaling",
    "cutout",
    "time_warp",
    "window_slice",
    "window_warp",
    "subsequence",
)


def registry(names: list[str] | None = None) -> list[TransformSpec]:
    """The ordered candidate set; optionally restricted to a named subset."""
    names = list(names) if names is not None else list(DEFAULT_ORDER)
    if len(set(names)) != len(names):
        raise ValueError("duplicate transform names in registry")
    return [TransformSpec(name) for name in names]


def apply_transform(spec: TransformSpec, x: TimeSeries, rng: np.random.Generator) -> TimeSeries:
    return TRANSFORMS[spec.name](x, rng, **spec.resolved())


def parse_transform_specs(text: str) -> list[TransformSpec]:
    """Parse a CLI-style spec list, e.g. ``jitter:std=0.3,subsequence``."""
    specs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, param_text = item.partition(":")
        params: dict[str, float] = {}
        if param_text:
            for pair in param_text.split(";"):
                key, _, value = pair.partition("=")
                if not value:
                    raise ValueError(f"malformed parameter {pair!r} in {item!r}")
                params[key.strip()] = float(value)
        specs.append(TransformSpec(name=name, params=params))
    if not specs:
        raise ValueError("empty transform spec string")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate transform names in spec string")
    return specs
