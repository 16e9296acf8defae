"""Alternating training loop: per batch, the encoder descends the contrastive
objective, the selection policy descends the variety + fidelity criteria with
encoder and classifier frozen, and the classifier head descends its
cross-entropy; the gate temperature anneals once per epoch.

In supervised mode, downstream labels feed only the selection criteria and
the classifier step; the encoder's contrastive objective never sees them.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .augment import TransformSpec, apply_transform, parse_transform_specs, registry
from .data import Batch, Dataset, TimeSeries, make_batches
from .encoder import ClassifierHead, DilatedConvEncoder, EncoderConfig
from .losses import (
    LossReport,
    criteria,
    fidelity_ce_pseudolabel,
    fidelity_ce_supervised,
    global_contrastive,
    l1out_variety,
    local_contrastive_batched,
    total_contrastive,
)
from .policy import (
    AugmentationPolicy,
    anneal_temperature,
    combine_views,
    policy_weights_snapshot,
    sample_gates,
    transform_stack,
)

MODES = ("unsupervised", "supervised")
ABLATIONS = ("none", "random_aug", "all_aug", "all_sequential", "no_fidelity", "no_variety")
_ABLATION_ALIASES = {"random": "random_aug", "all": "all_aug"}

POLICY_CSV_HEADER = "epoch,transform,p,normalized_weight"


@dataclass
class TrainConfig:
    """Hyperparameters for one training run. Defaults follow the common
    optimizer settings (Adam, lr 0.001, betas (0.9, 0.999)) and the gate
    temperature schedule from 2.0 down to 0.1."""

    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    meta_lr: float | None = None
    adam_betas: tuple[float, float] = (0.9, 0.999)
    alpha: float = 1.0
    beta: float = 1.0
    tau_start: float = 2.0
    tau_end: float = 0.1
    mode: str = "unsupervised"
    ablation: str = "none"
    seed: int = 0
    augmentations: str | list[TransformSpec] | None = None
    channels: int = 64
    depth: int = 10
    kernel: int = 3
    repr_dim: int = 320
    pooling: str = "max"
    normalize_sim: bool = False
    subseq_len: int | None = None
    grad_clip: float = 5.0
    pseudo_head: str = "similarity"
    checkpoint_every: int = 0

    def __post_init__(self):
        self.ablation = _ABLATION_ALIASES.get(self.ablation, self.ablation)
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (self.ablation in ABLATIONS or self.ablation.startswith("single:")):
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.pseudo_head not in ("similarity", "affine"):
            raise ValueError(f"unknown pseudo_head {self.pseudo_head!r}")

    def resolved_specs(self) -> list[TransformSpec]:
        if self.augmentations is None:
            specs = registry()
        elif isinstance(self.augmentations, str):
            specs = parse_transform_specs(self.augmentations)
        else:
            specs = list(self.augmentations)
        if self.ablation.startswith("single:"):
            wanted = self.ablation.split(":", 1)[1]
            specs = [s for s in specs if s.name == wanted]
            if not specs:
                raise ValueError(f"ablation {self.ablation!r} names no configured transform")
        return specs

    @property
    def learns_policy(self) -> bool:
        return self.ablation in ("none", "no_fidelity", "no_variety")


@dataclass
class TrainHistory:
    reports: list[LossReport] = field(default_factory=list)
    policy_rows: list[tuple[int, str, float, float]] = field(default_factory=list)
    local_skips: int = 0
    clip_events: int = 0

    def epoch_mean(self, attr: str, last_n_steps: int | None = None) -> float:
        reports = self.reports[-last_n_steps:] if last_n_steps else self.reports
        return float(np.mean([getattr(r, attr) for r in reports]))

    def write_losses_csv(self, path: str | Path) -> None:
        with open(path, "w") as handle:
            handle.write(LossReport.CSV_HEADER + "\n")
            for report in self.reports:
                handle.write(report.csv_row() + "\n")

    def write_policy_csv(self, path: str | Path) -> None:
        with open(path, "w") as handle:
            handle.write(POLICY_CSV_HEADER + "\n")
            for epoch, name, p, weight in self.policy_rows:
                handle.write(f"{epoch},{name},{p!r},{weight!r}\n")


class TrainState:
    """Everything the loop mutates: modules, optimizers, epoch counter, rng."""

    def __init__(self, config: TrainConfig, n_features: int, n_classes: int | None):
        config = replace(config)
        self.config = config
        self.specs = config.resolved_specs()
        self.n_classes = n_classes
        torch.manual_seed(config.seed)
        self.encoder = DilatedConvEncoder(
            EncoderConfig(
                input_dim=n_features,
                channels=config.channels,
                depth=config.depth,
                kernel=config.kernel,
                output_dim=config.repr_dim,
                pooling=config.pooling,
            )
        )
        self.head = self._build_head()
        self.policy = AugmentationPolicy(self.specs, temperature=config.tau_start)
        self.encoder_opt = torch.optim.Adam(
            self.encoder.parameters(), lr=config.lr, betas=config.adam_betas
        )
        self.meta_opt = torch.optim.Adam(
            self.policy.parameters(), lr=config.meta_lr or config.lr, betas=config.adam_betas
        )
        self.head_opt = (
            torch.optim.Adam(self.head.parameters(), lr=config.lr, betas=config.adam_betas)
            if self.head is not None
            else None
        )
        self.epoch = 0
        self.tau = config.tau_start

    def _build_head(self) -> ClassifierHead | None:
        if self.config.mode == "supervised":
            if self.n_classes is None:
                raise ValueError("supervised mode needs labeled data")
            return ClassifierHead(self.config.repr_dim, self.n_classes)
        if self.config.pseudo_head == "affine":
            return ClassifierHead(self.config.repr_dim, self.config.batch_size)
        return None

    def encode_windows(self, values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        from .encoder import encode_batches

        return encode_batches(self.encoder, values, mask)

    # -- checkpointing ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "config": self.config.__dict__,
            "n_features": self.encoder.config.input_dim,
            "n_classes": self.n_classes,
            "encoder": self.encoder.state_dict(),
            "head": None if self.head is None else self.head.state_dict(),
            "policy": self.policy.state_dict(),
            "encoder_opt": self.encoder_opt.state_dict(),
            "meta_opt": self.meta_opt.state_dict(),
            "head_opt": None if self.head_opt is None else self.head_opt.state_dict(),
            "epoch": self.epoch,
            "tau": self.tau,
            "torch_rng": torch.get_rng_state(),
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: str | Path) -> "TrainState":
        payload = torch.load(path, weights_only=False)
        config = TrainConfig(**payload["config"])
        state = cls(config, payload["n_features"], payload["n_classes"])
        state.encoder.load_state_dict(payload["encoder"])
        if state.head is not None:
            state.head.load_state_dict(payload["head"])
        state.policy.load_state_dict(payload["policy"])
        state.encoder_opt.load_state_dict(payload["encoder_opt"])
        state.meta_opt.load_state_dict(payload["meta_opt"])
        if state.head_opt is not None:
            state.head_opt.load_state_dict(payload["head_opt"])
        state.epoch = payload["epoch"]
        state.tau = payload["tau"]
        torch.set_rng_state(payload["torch_rng"])
        return state


@contextmanager
def _frozen(*modules: torch.nn.Module | None):
    """Temporarily stop gradient accumulation into the given modules."""
    touched = []
    for module in modules:
        if module is None:
            continue
        for param in module.parameters():
            touched.append((param, param.requires_grad))
            param.requires_grad_(False)
    try:
        yield
    finally:
        for param, prev in touched:
            param.requires_grad_(prev)


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, stream]))


def _check_finite(name: str, value: torch.Tensor, batch: Batch, batch_idx: int) -> None:
    if not torch.isfinite(value):
        raise RuntimeError(
            f"non-finite {name} ({value.item()!r}) in batch {batch_idx} "
            f"(instances {list(batch.instance_ids)[:4]}...)"
        )


def _sequential_view(batch: Batch, specs, rng) -> tuple[np.ndarray, np.ndarray]:
    """Literal composition of all candidate transforms in registry order."""
    values = np.empty_like(batch.values)
    mask = np.empty_like(batch.mask)
    for b in range(batch.size):
        inst = TimeSeries(values=batch.values[b], mask=batch.mask[b], id=batch.instance_ids[b])
        for spec in specs:
            inst = apply_transform(spec, inst, rng)
        values[b] = inst.values
        mask[b] = inst.mask
    return values, mask


def train_epoch(state: TrainState, dataset: Dataset, history: TrainHistory) -> None:
    """Run one epoch of the alternating update over the train split."""
    config = state.config
    state.tau = anneal_temperature(
        state.epoch, max(config.epochs, state.epoch + 1), config.tau_start, config.tau_end
    )
    state.policy.temperature = state.tau
    batch_seed = int(np.random.SeedSequence([config.seed, state.epoch, 1]).generate_state(1)[0])
    eps_rng = _epoch_rng(config.seed, state.epoch, 2)
    transform_rng = _epoch_rng(config.seed, state.epoch, 3)

    batches = make_batches(dataset, config.batch_size, shuffle=True, seed=batch_seed, split="train")
    step0 = len(history.reports)
    for batch_idx, batch in enumerate(batches):
        report = _train_batch(state, batch, batch_idx, step0 + batch_idx, eps_rng, transform_rng, history)
        history.reports.append(report)
    state.epoch += 1
    for name, p, weight in policy_weights_snapshot(state.policy):
        history.policy_rows.append((state.epoch, name, p, weight))


def _train_batch(
    state: TrainState,
    batch: Batch,
    batch_idx: int,
    step: int,
    eps_rng: np.random.Generator,
    transform_rng: np.random.Generator,
    history: TrainHistory,
) -> LossReport:
    config = state.config
    x = torch.as_tensor(batch.values, dtype=torch.float32)
    mask = torch.as_tensor(batch.mask)
    labels = None if batch.labels is None else torch.as_tensor(batch.labels)

    # One gate draw per batch; per-instance transform randomness.
    sequential_mask = None
    if config.ablation == "all_sequential":
        seq_values, seq_mask = _sequential_view(batch, state.specs, transform_rng)
        stack_t = None
        gates = None
        view_const = torch.as_tensor(seq_values, dtype=torch.float32)
        sequential_mask = torch.as_tensor(seq_mask)
    else:
        stack = transform_stack(batch, state.specs, transform_rng)
        stack_t = torch.as_tensor(stack, dtype=torch.float32)
        gates = _draw_gates(state, eps_rng)
        view_const = combine_views(x, stack_t, gates.values.detach().to(torch.float32))
    view_mask = mask if sequential_mask is None else sequential_mask

    # Encoder step on the contrastive objective; gates held constant.
    state.encoder.train()
    z_x = state.encoder(x, mask)
    z_v = state.encoder(view_const, view_mask)
    g_loss = global_contrastive(z_x, z_v, config.normalize_sim)
    l_loss, skipped = _local_loss(state, view_const, view_mask)
    if skipped:
        history.local_skips += 1
    enc_loss = total_contrastive(g_loss, l_loss, config.alpha)
    _check_finite("contrastive loss", enc_loss, batch, batch_idx)
    state.encoder_opt.zero_grad()
    enc_loss.backward()
    norm = torch.nn.utils.clip_grad_norm_(state.encoder.parameters(), config.grad_clip)
    if norm > config.grad_clip:
        history.clip_events += 1
    state.encoder_opt.step()
    state.encoder_opt.zero_grad(set_to_none=True)

    # Meta step on the criteria: only the selection logits move.
    variety_val, ce_val, crit_val = _meta_step(
        state, batch, x, mask, view_mask, stack_t, gates, view_const, labels, batch_idx
    )

    # Classifier step on the fidelity cross-entropy.
    _classifier_step(state, x, mask, view_const, view_mask, labels)

    return LossReport(
        step=step,
        global_loss=float(g_loss.detach()),
        local_loss=float(l_loss.detach()),
        total_loss=float(enc_loss.detach()),
        variety=variety_val,
        fidelity_ce=ce_val,
        criteria=crit_val,
        tau=state.tau,
    )


def _draw_gates(state: TrainState, eps_rng: np.random.Generator):
    config = state.config
    k = len(state.specs)
    if config.ablation == "random_aug":
        choice = int(eps_rng.integers(0, k))
        values = torch.zeros(k, dtype=torch.float64)
        values[choice] = 1.0
        return _ConstGates(values=values, eps=None)
    if config.ablation == "all_aug" or config.ablation.startswith("single:"):
        return _ConstGates(values=torch.ones(k, dtype=torch.float64), eps=None)
    return sample_gates(state.policy, eps_rng)


@dataclass
class _ConstGates:
    values: torch.Tensor
    eps: np.ndarray | None


def _local_loss(state: TrainState, view: torch.Tensor, mask: torch.Tensor):
    config = state.config
    t = view.shape[1]
    length = config.subseq_len or max(t // 8, 16)
    if t // length < 2:
        return torch.zeros((), dtype=view.dtype), True
    sub = state.encoder.encode_subsequences(view, mask, length)
    return local_contrastive_batched(sub), False


def _fidelity_term(state: TrainState, z_v: torch.Tensor, z_x: torch.Tensor, labels):
    config = state.config
    if config.mode == "supervised":
        return fidelity_ce_supervised(state.head(z_v), labels)
    if config.pseudo_head == "affine":
        logits = state.head(z_v)[:, : z_v.shape[0]]
        targets = torch.arange(z_v.shape[0])
        return torch.nn.functional.cross_entropy(logits, targets)
    return fidelity_ce_pseudolabel(z_v, z_x, config.normalize_sim)


def _meta_step(state, batch, x, mask, view_mask, stack_t, gates, view_const, labels, batch_idx):
    config = state.config
    if config.learns_policy:
        live = sample_gates(state.policy, np.random.default_rng(0), eps=gates.eps)
        view = combine_views(x, stack_t, live.values)
        with _frozen(state.encoder, state.head), torch.no_grad():
            z_x = state.encoder(x, mask)
        with _frozen(state.encoder, state.head):
            z_v = state.encoder(view, view_mask)
            variety = l1out_variety(z_x, z_v, config.normalize_sim)
            ce = _fidelity_term(state, z_v, z_x, labels)
            if config.ablation == "no_fidelity":
                objective = variety
            elif config.ablation == "no_variety":
                objective = config.beta * ce
            else:
                objective = criteria(variety, ce, config.beta)
        _check_finite("criteria", objective, batch, batch_idx)
        state.meta_opt.zero_grad()
        objective.backward()
        state.meta_opt.step()
        state.meta_opt.zero_grad(set_to_none=True)
        variety_val, ce_val = float(variety.detach()), float(ce.detach())
        return variety_val, ce_val, variety_val + config.beta * ce_val
    # Fixed-gate modes still report the criteria for sweeps and diagnostics.
    with torch.no_grad():
        z_x = state.encoder(x, mask)
        z_v = state.encoder(view_const, view_mask)
        variety = l1out_variety(z_x, z_v, config.normalize_sim)
        ce = _fidelity_term(state, z_v, z_x, labels)
    variety_val, ce_val = float(variety), float(ce)
    return variety_val, ce_val, variety_val + config.beta * ce_val


def _classifier_step(state, x, mask, view_const, view_mask, labels):
    config = state.config
    if state.head is None or state.head_opt is None:
        return
    with torch.no_grad():
        z_v = state.encoder(view_const, view_mask)
    if config.mode == "supervised":
        loss = fidelity_ce_supervised(state.head(z_v), labels)
    else:
        logits = state.head(z_v)[:, : z_v.shape[0]]
        loss = torch.nn.functional.cross_entropy(logits, torch.arange(z_v.shape[0]))
    state.head_opt.zero_grad()
    loss.backward()
    state.head_opt.step()
    state.head_opt.zero_grad(set_to_none=True)


def fit(
    dataset: Dataset,
    config: TrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[TrainState, TrainHistory]:
    """Train for ``config.epochs`` epochs and optionally persist artifacts.

    Writes ``losses.csv`` (one row per step), ``policy.csv`` (one row per
    transform per epoch) and ``checkpoint.pt`` when ``out_dir`` is given.
    """
    if config.mode == "supervised" and dataset.labels is None:
        raise ValueError("supervised mode requires labels")
    state = TrainState(config, dataset.n_features, dataset.num_classes)
    history = TrainHistory()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    for epoch in range(config.epochs):
        train_epoch(state, dataset, history)
        if (
            out_path is not None
            and config.checkpoint_every
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            state.save(out_path / f"checkpoint_epoch{epoch + 1:04d}.pt")
    if out_path is not None:
        state.save(out_path / "checkpoint.pt")
        history.write_losses_csv(out_path / "losses.csv")
        history.write_policy_csv(out_path / "policy.csv")
    return state, history
