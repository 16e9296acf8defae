"""Differentiable augmentation selection: per-transform logits, relaxed
Bernoulli gate sampling, view construction by convex combination, and the
temperature schedule.

Gates are sampled once per batch; transform randomness is drawn per instance.
Gradients flow from the combined view back to the logits whenever the
temperature is positive, which is what lets the selection weights be trained
with the same optimizer machinery as everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .augment import TransformSpec, apply_transform
from .data import Batch, TimeSeries

LOGIT_CLAMP = 30.0


class AugmentationPolicy(torch.nn.Module):
    """Learnable per-transform selection logits with a shared temperature."""

    def __init__(self, specs: list[TransformSpec], temperature: float = 2.0):
        super().__init__()
        if not specs:
            raise ValueError("empty transform set")
        self.specs = list(specs)
        self.logits = torch.nn.Parameter(torch.zeros(len(specs), dtype=torch.float64))
        self.temperature = float(temperature)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    def clamped_logits(self) -> torch.Tensor:
        return self.logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)

    def probabilities(self) -> torch.Tensor:
        return torch.sigmoid(self.clamped_logits())


@dataclass(frozen=True)
class GateSample:
    """One batch of relaxed gates plus the uniform noise that produced them."""

    values: torch.Tensor
    eps: np.ndarray


def sample_gates(
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    eps: np.ndarray | None = None,
) -> GateSample:
    """Draw relaxed Bernoulli gates, one per candidate transform.

    ``a_i = sigmoid((logit(eps_i) + q_i) / tau)`` where ``q_i`` is the
    selection logit (identical to ``log(p_i / (1 - p_i))``). Passing ``eps``
    freezes the noise, which finite-difference gradient checks rely on.
    """
    if policy.temperature <= 0:
        raise ValueError("temperature must be positive")
    if eps is None:
        eps = rng.uniform(0.0, 1.0, size=len(policy.specs))
    eps = np.asarray(eps, dtype=np.float64)
    noise = torch.from_numpy(np.log(eps) - np.log1p(-eps))
    a = torch.sigmoid((noise + policy.clamped_logits()) / policy.temperature)
    return GateSample(values=a, eps=eps)


def transform_stack(batch: Batch, specs: list[TransformSpec], rng: np.random.Generator) -> np.ndarray:
    """Apply every candidate transform to every instance: ``[K, B, T, F]``.

    Stochastic parameters are drawn per instance, so instances in a batch
    receive independent augmentations of the same transform.
    """
    if not specs:
        raise ValueError("empty transform set")
    stack = np.empty((len(specs), *batch.values.shape))
    for k, spec in enumerate(specs):
        for b in range(batch.size):
            inst = TimeSeries(values=batch.values[b], mask=batch.mask[b], id=batch.instance_ids[b])
            stack[k, b] = apply_transform(spec, inst, rng).values
    return stack


def combine_views(x: torch.Tensor, stack: torch.Tensor, gates: torch.Tensor) -> torch.Tensor:
    """Average the per-transform convex combinations into one view.

    ``v_i = (1 - a_i) x + a_i t_i(x)`` and ``v = mean_i v_i``, so the
    gradient of the view with respect to gate ``a_i`` is
    ``(t_i(x) - x) / K``.
    """
    if stack.shape[0] != gates.shape[0]:
        raise ValueError("one gate per transform required")
    a = gates.reshape(-1, 1, 1, 1).to(stack.dtype)
    return ((1.0 - a) * x.unsqueeze(0) + a * stack).mean(dim=0)


def build_views(
    batch: Batch,
    gates: np.ndarray | torch.Tensor,
    specs: list[TransformSpec],
    rng: np.random.Generator,
) -> Batch:
    """Numpy-level view construction for callers outside the training graph.

    The returned batch keeps the source observation mask: transform-level
    zeroing (e.g. the kept-window transform) enters through the values of the
    convex combination, not through the mask.
    """
    if not specs:
        raise ValueError("empty transform set")
    gates = np.asarray(gates.detach() if isinstance(gates, torch.Tensor) else gates, dtype=np.float64)
    stack = transform_stack(batch, specs, rng)
    a = gates.reshape(-1, 1, 1, 1)
    values = ((1.0 - a) * batch.values[None] + a * stack).mean(axis=0)
    return Batch(values=values, mask=batch.mask, labels=batch.labels, instance_ids=batch.instance_ids)


def anneal_temperature(
    epoch: int, total_epochs: int, tau_start: float = 2.0, tau_end: float = 0.1
) -> float:
    """Exponential decay from ``tau_start`` to ``tau_end``, clamped below.

    Monotone non-increasing in the epoch; hits ``tau_start`` at epoch 0 and
    ``tau_end`` at the final epoch.
    """
    if tau_start < tau_end:
        raise ValueError("tau_start must be >= tau_end")
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return tau_start
    decay = (tau_end / tau_start) ** (epoch / (total_epochs - 1))
    return max(tau_end, tau_start * decay)


def policy_weights_snapshot(policy: AugmentationPolicy) -> list[tuple[str, float, float]]:
    """(name, probability, normalized weight) per transform, for trajectories."""
    with torch.no_grad():
        p = policy.probabilities().numpy()
    normalized = p / p.sum()
    return [
        (name, float(p[i]), float(normalized[i]))
        for i, name in enumerate(policy.names)
    ]
