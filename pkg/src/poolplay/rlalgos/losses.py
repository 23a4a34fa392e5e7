"""Policy-gradient losses as pure functions, each with its analytic gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def dual_clip_objective(ratio: np.ndarray, adv: np.ndarray, epsilon: float = 0.2,
                        eta: float = 3.0) -> np.ndarray:
    """Per-sample dual-clip PPO loss (already negated, so lower is better).

    Non-negative advantage: -min(r A, clip(r) A).
    Negative advantage:     -max(min(r A, clip(r) A), eta A).
    """
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    surr = np.minimum(ratio * adv, clipped * adv)
    obj = np.where(adv >= 0, surr, np.maximum(surr, eta * adv))
    return -obj


def dual_clip_policy_loss(new_logp: np.ndarray, old_logp: np.ndarray, adv: np.ndarray,
                          epsilon: float = 0.2, eta: float = 3.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss, per-sample losses and d(per-sample loss)/d(new_logp)."""
    ratio = np.exp(new_logp - old_logp)
    per = dual_clip_objective(ratio, adv, epsilon, eta)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    unclipped_active = ratio * adv <= clipped * adv  # min picked r*A (ties: r inside the clip range)
    dobj_dr = np.where(unclipped_active, adv, np.where((ratio > 1 - epsilon) & (ratio < 1 + epsilon), adv, 0.0))
    floor_active = (adv < 0) & (np.minimum(ratio * adv, clipped * adv) < eta * adv)
    dobj_dr = np.where(floor_active, 0.0, dobj_dr)
    dper = -dobj_dr * ratio
    return float(per.mean()), per, dper


def value_loss(values: np.ndarray, returns: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. ``values``."""
    values = np.asarray(values, dtype=np.float64)
    diff = values - np.asarray(returns, dtype=np.float64)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def rnd_intrinsic_reward(prediction: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Mean squared embedding difference per sample."""
    d = np.atleast_2d(prediction) - np.atleast_2d(target)
    return np.mean(d**2, axis=1)


def rnd_combined_advantage(adv_ext: np.ndarray, adv_int: np.ndarray, c_e: float = 2.0,
                           c_i: float = 8.0) -> np.ndarray:
    return c_e * np.asarray(adv_ext, dtype=np.float64) + c_i * np.asarray(adv_int, dtype=np.float64)


@dataclass(frozen=True)
class RndLossWeights:
    policy: float = 1.0
    value: float = 0.5
    intrinsic_value: float = 0.5
    prediction: float = 1.0


def rnd_total_loss(policy: float, value: float, intrinsic_value: float, prediction: float,
                   weights: RndLossWeights = RndLossWeights()) -> float:
    return (weights.policy * policy + weights.value * value
            + weights.intrinsic_value * intrinsic_value + weights.prediction * prediction)


def mappo_policy_loss(per_player_losses: Sequence[float]) -> float:
    """Average of the players' policy losses."""
    if len(per_player_losses) == 0:
        raise ValueError("need at least one player")
    return float(sum(per_player_losses) / len(per_player_losses))


def masked_entropy(logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row entropy and dH/dlogits for a (masked) log-softmax."""
    p = np.exp(logp)
    safe_logp = np.where(p > 0, logp, 0.0)
    h = -(p * safe_logp).sum(axis=1)
    dh = -p * (safe_logp + h[:, None])
    return h, dh


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    return (adv - adv.mean()) / (adv.std() + eps)
