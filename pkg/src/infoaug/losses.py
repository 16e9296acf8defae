"""Loss functions: batch-level and subsequence-level contrastive objectives
for encoder training, the leave-one-out variety bound and fidelity
cross-entropy for the selection criteria, and their weighted combinations.

Similarity is the raw inner product throughout (no temperature, no implicit
normalization); every log-sum-exp is stabilized by max subtraction, so values
stay finite for similarities up to ~1e4.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


def similarity_matrix(a: torch.Tensor, b: torch.Tensor, normalize: bool = False) -> torch.Tensor:
    """Pairwise inner products ``[i, j] = <a_i, b_j>``; optionally cosine."""
    if normalize:
        a = F.normalize(a, dim=-1)
        b = F.normalize(b, dim=-1)
    return a @ b.transpose(-1, -2)


def _require_batch(z: torch.Tensor, minimum: int = 2) -> None:
    if z.shape[0] < minimum:
        raise ValueError(f"contrastive objectives need at least {minimum} instances, got {z.shape[0]}")


def global_contrastive(z_x: torch.Tensor, z_v: torch.Tensor, normalize: bool = False) -> torch.Tensor:
    """Batch-level contrast: each source against every view in the batch.

    The denominator sums over all views including the positive, so every
    summand is non-negative and identical representations give ``log B``.
    """
    _require_batch(z_x)
    sims = similarity_matrix(z_x, z_v, normalize)
    return -torch.diagonal(F.log_softmax(sims, dim=1)).mean()


def l1out_variety(z_x: torch.Tensor, z_v: torch.Tensor, normalize: bool = False) -> torch.Tensor:
    """Leave-one-out upper bound used as the variety term of the criteria.

    Unlike the batch contrastive loss, the denominator excludes the positive
    pair; minimizing this drives views away from their own source relative to
    the other instances' views.
    """
    _require_batch(z_x)
    sims = similarity_matrix(z_x, z_v, normalize)
    eye = torch.eye(sims.shape[0], dtype=torch.bool, device=sims.device)
    neg_inf = torch.finfo(sims.dtype).min
    off_diag = sims.masked_fill(eye, neg_inf)
    return (torch.diagonal(sims) - torch.logsumexp(off_diag, dim=1)).mean()


def local_terms(sub_reps: torch.Tensor) -> torch.Tensor:
    """Per-subsequence contrastive terms for one instance.

    For subsequence ``s`` the positive is the next window (the previous one
    when ``s`` is last); negatives are the same instance's windows at index
    distance greater than 1. With no negatives a term is exactly 0.
    """
    n = sub_reps.shape[0]
    if n < 2:
        raise ValueError("need at least 2 subsequences")
    sims = similarity_matrix(sub_reps, sub_reps)
    idx = torch.arange(n, device=sub_reps.device)
    pos = torch.where(idx == n - 1, idx - 1, idx + 1)
    pos_sim = sims[idx, pos]
    dist = (idx.unsqueeze(0) - idx.unsqueeze(1)).abs()
    neg_mask = dist > 1
    neg_inf = torch.finfo(sims.dtype).min
    negatives = sims.masked_fill(~neg_mask, neg_inf)
    # Stack the positive with the negatives so each term is a softmax over
    # {positive} + far-away windows; empty negative sets contribute 0.
    denom = torch.logsumexp(torch.cat([pos_sim.unsqueeze(1), negatives], dim=1), dim=1)
    return denom - pos_sim


def local_contrastive(sub_reps_per_instance: list[torch.Tensor]) -> torch.Tensor:
    """Subsequence-level loss averaged over instances with >= 2 windows."""
    losses = []
    for reps in sub_reps_per_instance:
        if reps.shape[0] < 2:
            continue
        losses.append(local_terms(reps).mean())
    if not losses:
        raise ValueError("no instance has at least 2 subsequences")
    return torch.stack(losses).mean()


def local_contrastive_batched(sub_reps: torch.Tensor) -> torch.Tensor:
    """Vectorized local loss for a ``[B, n_windows, D]`` stack."""
    b, n, _ = sub_reps.shape
    if n < 2:
        raise ValueError("need at least 2 subsequences per instance")
    sims = similarity_matrix(sub_reps, sub_reps)  # [B, n, n]
    idx = torch.arange(n, device=sub_reps.device)
    pos = torch.where(idx == n - 1, idx - 1, idx + 1)
    pos_sim = sims[:, idx, pos]
    dist = (idx.unsqueeze(0) - idx.unsqueeze(1)).abs()
    neg_inf = torch.finfo(sims.dtype).min
    negatives = sims.masked_fill((dist <= 1).unsqueeze(0), neg_inf)
    denom = torch.logsumexp(torch.cat([pos_sim.unsqueeze(2), negatives], dim=2), dim=2)
    return (denom - pos_sim).mean()


def total_contrastive(global_loss: torch.Tensor, local_loss: torch.Tensor, alpha: float) -> torch.Tensor:
    """Encoder objective: global term plus ``alpha`` times the local term."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return global_loss + alpha * local_loss


def fidelity_ce_supervised(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy of view classifications against true labels."""
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label outside [0, n_classes)")
    return F.cross_entropy(logits, labels)


def fidelity_ce_pseudolabel(z_v: torch.Tensor, z_x: torch.Tensor, normalize: bool = False) -> torch.Tensor:
    """Batch pseudo-label cross-entropy via similarity logits.

    Each view must be classified back to its own source instance: logits row
    ``b`` holds the similarities of view ``b`` to every source in the batch
    and the target is ``b`` itself.
    """
    _require_batch(z_v)
    logits = similarity_matrix(z_v, z_x, normalize)
    targets = torch.arange(logits.shape[0], device=logits.device)
    return F.cross_entropy(logits, targets)


def criteria(variety: torch.Tensor, fidelity_ce: torch.Tensor, beta: float) -> torch.Tensor:
    """Selection objective the meta step minimizes: variety + beta * fidelity."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return variety + beta * fidelity_ce


@dataclass(frozen=True)
class LossReport:
    """Scalar losses for one training step."""

    step: int
    global_loss: float
    local_loss: float
    total_loss: float
    variety: float
    fidelity_ce: float
    criteria: float
    tau: float

    CSV_HEADER = "step,L_g,L_c,L_total,L1Out,CE,criteria,tau"

    def csv_row(self) -> str:
        return (
            f"{self.step},{self.global_loss!r},{self.local_loss!r},{self.total_loss!r},"
            f"{self.variety!r},{self.fidelity_ce!r},{self.criteria!r},{self.tau!r}"
        )
