"""End-to-end differentiability check harness.

Builds a tiny frozen world (toy batch, fixed transform outputs, fixed gate
noise, fixed encoder weights) in double precision so the selection criteria
become a deterministic scalar function of the policy logits alone. That
function can then be compared coordinate by coordinate against central finite
differences.
"""

from __future__ import annotations

import numpy as np
import torch

from .augment import TransformSpec, registry
from .data import Batch
from .encoder import DilatedConvEncoder, EncoderConfig
from .losses import criteria, fidelity_ce_pseudolabel, l1out_variety
from .policy import combine_views


class CriteriaFunction:
    """Selection criteria as a pure function of the policy logits.

    Noise, transform outputs, encoder weights, and the source batch are all
    frozen at construction; only the logits vary. ``__call__`` returns the
    scalar value; ``gradient`` returns the autodiff gradient at a point.
    """

    def __init__(
        self,
        seed: int = 0,
        batch_size: int = 4,
        length: int = 32,
        n_features: int = 1,
        depth: int = 2,
        channels: int = 4,
        repr_dim: int = 8,
        tau: float = 1.0,
        beta: float = 1.0,
        specs: list[TransformSpec] | None = None,
    ):
        rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        self.specs = specs if specs is not None else registry()
        self.tau = tau
        self.beta = beta

        values = rng.normal(0.0, 1.0, size=(batch_size, length, n_features))
        mask = np.ones_like(values, dtype=bool)
        batch = Batch(
            values=values,
            mask=mask,
            labels=None,
            instance_ids=tuple(f"toy#{i}" for i in range(batch_size)),
        )
        from .policy import transform_stack

        self.x = torch.as_tensor(values, dtype=torch.float64)
        self.mask = torch.as_tensor(mask)
        self.stack = torch.as_tensor(
            transform_stack(batch, self.specs, rng), dtype=torch.float64
        )
        self.eps = rng.uniform(0.05, 0.95, size=len(self.specs))
        self.noise = torch.as_tensor(np.log(self.eps) - np.log1p(-self.eps))

        self.encoder = DilatedConvEncoder(
            EncoderConfig(
                input_dim=n_features, channels=channels, depth=depth, output_dim=repr_dim
            )
        ).double()
        for param in self.encoder.parameters():
            param.requires_grad_(False)
        with torch.no_grad():
            self.z_x = self.encoder(self.x, self.mask)

    def initial_logits(self) -> np.ndarray:
        return np.zeros(len(self.specs))

    def _value(self, logits: torch.Tensor) -> torch.Tensor:
        gates = torch.sigmoid((self.noise + logits) / self.tau)
        view = combine_views(self.x, self.stack, gates)
        z_v = self.encoder(view, self.mask)
        variety = l1out_variety(self.z_x, z_v)
        fidelity = fidelity_ce_pseudolabel(z_v, self.z_x)
        return criteria(variety, fidelity, self.beta)

    def __call__(self, logits: np.ndarray) -> float:
        with torch.no_grad():
            q = torch.as_tensor(np.asarray(logits, dtype=np.float64))
            return float(self._value(q))

    def gradient(self, logits: np.ndarray) -> np.ndarray:
        q = torch.as_tensor(np.asarray(logits, dtype=np.float64)).requires_grad_(True)
        value = self._value(q)
        (grad,) = torch.autograd.grad(value, q)
        return grad.numpy()


def criteria_of_logits_factory(seed: int = 0, **kwargs) -> tuple[CriteriaFunction, np.ndarray]:
    """Convenience used by the verify suite: function plus its start point."""
    fn = CriteriaFunction(seed=seed, **kwargs)
    rng = np.random.default_rng(seed + 1)
    logits0 = rng.normal(0.0, 0.5, size=len(fn.specs))
    return fn, logits0
