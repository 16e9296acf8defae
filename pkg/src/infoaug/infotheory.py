"""Desk-scale verification tools: exact discrete entropy and mutual information,
augmentation-channel property checks, concrete-gate limit statistics, and
finite-difference gradients.

Everything here is brute force by design. Alphabets are small enough that the
exact sums run in milliseconds, so these functions can serve as independent
oracles for the stochastic, high-dimensional training code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

MAX_X = 16
MAX_Y = 8
MAX_V = 64

_NORM_TOL = 1e-9


def _validate_distribution(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("distribution has negative entries")
    if abs(p.sum() - 1.0) > _NORM_TOL:
        raise ValueError(f"distribution sums to {p.sum()!r}, expected 1")
    return p


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with the 0*log(0) := 0 convention."""
    p = _validate_distribution(p).ravel()
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def mutual_information(joint: np.ndarray) -> float:
    """MI(x; y) in nats from a joint table P(x, y), by direct summation."""
    joint = _validate_distribution(joint)
    if joint.ndim != 2:
        raise ValueError("joint table must be 2-dimensional")
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    total = 0.0
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            pij = joint[i, j]
            if pij > 0:
                total += pij * np.log(pij / (px[i] * py[j]))
    return float(total)


def _validate_channel(channel: np.ndarray) -> np.ndarray:
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2:
        raise ValueError("channel must be a [n_x, n_v] matrix")
    if np.any(channel < 0):
        raise ValueError("channel has negative entries")
    rows = channel.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > _NORM_TOL):
        raise ValueError("channel rows must each sum to 1")
    return channel


def channel_has_disjoint_support(channel: np.ndarray) -> bool:
    """True when no augmentation outcome is reachable from two distinct inputs."""
    support = _validate_channel(channel) > 0
    return bool(np.all(support.sum(axis=0) <= 1))


def push_joint_through_channel(joint_xy: np.ndarray, channel: np.ndarray) -> np.ndarray:
    """P(v, y) = sum_x P(x, y) P(v | x), assuming P(v | x, y) = P(v | x)."""
    joint_xy = _validate_distribution(joint_xy)
    channel = _validate_channel(channel)
    if channel.shape[0] != joint_xy.shape[0]:
        raise ValueError("channel rows must match the x alphabet")
    return channel.T @ joint_xy


@dataclass(frozen=True)
class PropertyCheck:
    """Result of one exhaustive property verification."""

    ok: bool
    residual: float
    disjoint_support: bool


def check_fidelity_preservation(
    joint_xy: np.ndarray, channel: np.ndarray, tol: float = 1e-12
) -> PropertyCheck:
    """Verify MI(v; y) = MI(x; y) for a label-preserving augmentation channel.

    The equality is only guaranteed when the channel is one-to-many, i.e.
    distinct inputs can never produce the same augmented outcome. Channels
    with overlapping supports are reported as precondition violations and the
    residual is still returned so negative controls can assert the failure.
    """
    disjoint = channel_has_disjoint_support(channel)
    joint_vy = push_joint_through_channel(joint_xy, channel)
    residual = abs(mutual_information(joint_vy) - mutual_information(joint_xy))
    return PropertyCheck(ok=disjoint and residual <= tol, residual=residual, disjoint_support=disjoint)


def check_information_gain(
    marginal_x: np.ndarray, channel: np.ndarray, tol: float = 1e-12
) -> PropertyCheck:
    """Verify H(v) >= H(x) for a one-to-many augmentation channel."""
    disjoint = channel_has_disjoint_support(channel)
    marginal_x = _validate_distribution(marginal_x)
    channel = _validate_channel(channel)
    marginal_v = channel.T @ marginal_x
    residual = entropy(marginal_x) - entropy(marginal_v)
    return PropertyCheck(ok=disjoint and residual <= tol, residual=residual, disjoint_support=disjoint)


def random_joint(rng: np.random.Generator, n_x: int, n_y: int) -> np.ndarray:
    """A random dense joint P(x, y) with Dirichlet(1) mass."""
    if n_x > MAX_X or n_y > MAX_Y:
        raise ValueError("alphabet larger than the desk-scale cap")
    return rng.dirichlet(np.ones(n_x * n_y)).reshape(n_x, n_y)


def random_disjoint_channel(
    rng: np.random.Generator, n_x: int, n_v: int
) -> np.ndarray:
    """A random one-to-many channel P(v | x) with disjoint per-x support blocks.

    Each x owns a contiguous block of at least one v outcome; within a block
    the conditional distribution is Dirichlet(1).
    """
    if n_v < n_x:
        raise ValueError("need at least one v outcome per x")
    if n_v > MAX_V:
        raise ValueError("v alphabet larger than the desk-scale cap")
    cuts = np.sort(rng.choice(np.arange(1, n_v), size=n_x - 1, replace=False)) if n_x > 1 else np.array([], dtype=int)
    bounds = np.concatenate(([0], cuts, [n_v]))
    channel = np.zeros((n_x, n_v))
    for i in range(n_x):
        lo, hi = bounds[i], bounds[i + 1]
        channel[i, lo:hi] = rng.dirichlet(np.ones(hi - lo))
    return channel


def random_overlapping_channel(
    rng: np.random.Generator, n_x: int, n_v: int
) -> np.ndarray:
    """A channel whose supports overlap across inputs (negative control)."""
    if n_x < 2:
        raise ValueError("need at least two inputs to overlap")
    channel = np.stack([rng.dirichlet(np.ones(n_v)) for _ in range(n_x)])
    # Dense Dirichlet rows share full support, so the one-to-many
    # precondition fails for every v.
    assert not channel_has_disjoint_support(channel)
    return channel


def concrete_gate(p: np.ndarray, tau: float, eps: np.ndarray) -> np.ndarray:
    """Relaxed Bernoulli gate: sigmoid((logit(eps) + logit(p)) / tau)."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    p = np.asarray(p, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    logits = np.log(eps) - np.log1p(-eps) + np.log(p) - np.log1p(-p)
    return expit(logits / tau)


def check_concrete_limit(
    p: float, tau: float, n_samples: int, rng: np.random.Generator | None = None
) -> float:
    """Monte Carlo estimate of P(gate > 0.5) under the relaxed Bernoulli."""
    rng = rng or np.random.default_rng(0)
    eps = rng.uniform(0.0, 1.0, size=n_samples)
    gates = concrete_gate(np.full(n_samples, p), tau, eps)
    return float(np.mean(gates > 0.5))


def finite_difference_gradient(fn, point: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time.

    The function must be deterministic at the perturbed points (freeze any
    randomness before calling), otherwise the estimate is meaningless.
    """
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = point.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = float(fn(bumped.reshape(point.shape)))
        bumped[i] = flat[i] - h
        down = float(fn(bumped.reshape(point.shape)))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ValueError(f"non-finite evaluation at coordinate {i}")
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def leave_one_out_log_ratio(sims: np.ndarray) -> float:
    """Direct per-element evaluation of the batch leave-one-out bound.

    Cross-checks the vectorized training loss: for each anchor row the
    numerator is the diagonal similarity and the denominator sums the
    off-diagonal row entries, all in plain Python loops.
    """
    sims = np.asarray(sims, dtype=np.float64)
    n = sims.shape[0]
    if sims.shape != (n, n) or n < 2:
        raise ValueError("need a square similarity matrix with n >= 2")
    total = 0.0
    for i in range(n):
        denom = 0.0
        for j in range(n):
            if j != i:
                denom += np.exp(sims[i, j])
        total += sims[i, i] - np.log(denom)
    return total / n
