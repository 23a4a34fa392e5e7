"""Dual-clip PPO, RND-PPO and MAPPO objectives and the train-step driver."""

from .gae import RunningStd, compute_gae
from .losses import (
    RndLossWeights, dual_clip_objective, dual_clip_policy_loss, mappo_policy_loss, masked_entropy,
    normalize_advantages, rnd_combined_advantage, rnd_intrinsic_reward, rnd_total_loss, value_loss,
)
from .trainer import ALGORITHMS, Batch, LossBreakdown, PpoConfig, RndConfig, Trainer, total_loss

__all__ = [
    "RunningStd", "compute_gae", "RndLossWeights", "dual_clip_objective", "dual_clip_policy_loss",
    "mappo_policy_loss", "masked_entropy", "normalize_advantages", "rnd_combined_advantage",
    "rnd_intrinsic_reward", "rnd_total_loss", "value_loss", "ALGORITHMS", "Batch", "LossBreakdown",
    "PpoConfig", "RndConfig", "Trainer", "total_loss",
]
