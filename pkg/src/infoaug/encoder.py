"""Representation function: per-timestep linear projection into a stack of
residual dilated convolution blocks, followed by masked pooling over time.

Masked timestamps are zeroed after the projection and after every block, so
features at observed positions are exactly what they would be if the padding
rows were absent; appending masked padding therefore never changes the pooled
representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    channels: int = 64
    depth: int = 10
    kernel: int = 3
    output_dim: int = 320
    pooling: str = "max"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.kernel % 2 != 1:
            raise ValueError("kernel must be odd for symmetric padding")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.pooling not in ("max", "mean", "last"):
            raise ValueError(f"unknown pooling {self.pooling!r}")

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(2**i for i in range(self.depth))

    def receptive_field(self) -> int:
        """Width of the input window one output timestamp can see."""
        return 1 + (self.kernel - 1) * sum(self.dilations)


class _ResidualDilatedBlock(nn.Module):
    """Pre-activation residual block with a single dilated convolution."""

    def __init__(self, channels: int, kernel: int, dilation: int):
        super().__init__()
        self.conv = nn.Conv1d(
            channels,
            channels,
            kernel_size=kernel,
            dilation=dilation,
            padding=dilation * (kernel - 1) // 2,
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return h + self.conv(torch.nn.functional.gelu(h))


class DilatedConvEncoder(nn.Module):
    """Maps ``[B, T, F]`` series (with masks) to ``[B, D]`` representations."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.input_fc = nn.Linear(config.input_dim, config.channels)
        self.blocks = nn.ModuleList(
            _ResidualDilatedBlock(config.channels, config.kernel, d) for d in config.dilations
        )
        self.output_proj = nn.Conv1d(config.channels, config.output_dim, kernel_size=1)

    def forward(self, values: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if values.ndim != 3:
            raise ValueError(f"expected [B, T, F] input, got shape {tuple(values.shape)}")
        if values.shape[-1] != self.config.input_dim:
            raise ValueError(
                f"input has {values.shape[-1]} features, encoder expects {self.config.input_dim}"
            )
        observed = self._observed(values, mask)
        keep = observed.unsqueeze(1).to(values.dtype)

        h = self.input_fc(values).transpose(1, 2)  # [B, C, T]
        h = h * keep
        for block in self.blocks:
            h = block(h) * keep
        feats = self.output_proj(h)  # [B, D, T]
        return self._pool(feats, observed)

    def _observed(self, values: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
        if mask is None:
            return torch.ones(values.shape[:2], dtype=torch.bool, device=values.device)
        if mask.ndim == 3:
            mask = mask.any(dim=-1)
        # Guard against fully-masked instances; pooling needs one position.
        empty = ~mask.any(dim=1)
        if empty.any():
            mask = mask.clone()
            mask[empty, 0] = True
        return mask

    def _pool(self, feats: torch.Tensor, observed: torch.Tensor) -> torch.Tensor:
        if self.config.pooling == "max":
            neg_inf = torch.finfo(feats.dtype).min
            masked = feats.masked_fill(~observed.unsqueeze(1), neg_inf)
            return masked.max(dim=-1).values
        weights = observed.unsqueeze(1).to(feats.dtype)
        return (feats * weights).sum(dim=-1) / weights.sum(dim=-1)

    def encode_subsequences(
        self, values: torch.Tensor, mask: torch.Tensor | None, length: int
    ) -> torch.Tensor:
        """Encode consecutive non-overlapping windows: ``[B, T//length, D]``.

        Each window runs through the same parameters independently, so row
        ``w`` equals a plain forward pass on that window.
        """
        if length < 2:
            raise ValueError("subsequence length must be >= 2")
        b, t, f = values.shape
        n = t // length
        if n < 1:
            raise ValueError(f"series of length {t} has no window of length {length}")
        trimmed = values[:, : n * length].reshape(b * n, length, f)
        sub_mask = None
        if mask is not None:
            m = mask if mask.ndim == 3 else mask.unsqueeze(-1)
            sub_mask = m[:, : n * length].reshape(b * n, length, -1)
        return self.forward(trimmed, sub_mask).reshape(b, n, -1)


class ClassifierHead(nn.Module):
    """Affine map from representations to label logits."""

    def __init__(self, input_dim: int, n_classes: int):
        super().__init__()
        self.linear = nn.Linear(input_dim, n_classes)

    @property
    def n_classes(self) -> int:
        return self.linear.out_features

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.linear.in_features:
            raise ValueError(
                f"representation width {z.shape[-1]} does not match head input {self.linear.in_features}"
            )
        return self.linear(z)


def encode_batches(
    encoder: DilatedConvEncoder,
    values: np.ndarray,
    mask: np.ndarray | None = None,
    batch_size: int = 64,
    dtype: torch.dtype = torch.float32,
) -> np.ndarray:
    """Frozen-encoder convenience: encode a numpy stack in minibatches."""
    encoder.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, values.shape[0], batch_size):
            chunk = torch.as_tensor(values[start : start + batch_size], dtype=dtype)
            chunk_mask = None
            if mask is not None:
                chunk_mask = torch.as_tensor(mask[start : start + batch_size])
            outputs.append(encoder(chunk, chunk_mask).numpy())
    return np.concatenate(outputs, axis=0)
