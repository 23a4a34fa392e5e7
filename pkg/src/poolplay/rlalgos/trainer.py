"""One optimiser pass per batch for PPO, RND-PPO and MAPPO learners."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..netcore import AdamState, NonFiniteGradient, PolicyValueNet, adam_step, backprop, forward, masked_log_softmax
from ..rollout import Segment
from .gae import RunningStd, compute_gae
from .losses import (
    RndLossWeights, dual_clip_policy_loss, masked_entropy, normalize_advantages, rnd_combined_advantage,
    value_loss,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("ppo", "rnd_ppo", "mappo")


@dataclass(frozen=True)
class PpoConfig:
    epsilon: float = 0.2
    eta: float = 3.0
    gamma: float = 0.9995
    lam: float = 0.95
    value_loss_weight: float = 0.5
    entropy_start: float = 0.01
    entropy_end: float = 0.01
    entropy_anneal_iters: int = 1
    lr: float = 5e-5
    beta1: float = 0.99
    beta2: float = 0.999
    max_grad_norm: float = 10.0
    batch_size: int = 4096
    minibatch_size: int = 512
    sample_reuse: float = 1.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not self.eta > 1.0 + self.epsilon:
            raise ValueError("eta must exceed 1 + epsilon")
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError("gamma and lambda must lie in (0, 1]")
        if self.minibatch_size <= 0 or self.batch_size <= 0:
            raise ValueError("batch sizes must be positive")

    def entropy_coef(self, iteration: int) -> float:
        frac = min(max(iteration / max(self.entropy_anneal_iters, 1), 0.0), 1.0)
        return self.entropy_start + frac * (self.entropy_end - self.entropy_start)


@dataclass(frozen=True)
class RndConfig:
    intrinsic_gamma: float = 0.99
    intrinsic_coef: float = 8.0
    extrinsic_coef: float = 2.0
    weights: RndLossWeights = RndLossWeights()
    embed_dim: int = 32

    def __post_init__(self):
        if self.intrinsic_coef < 0 or self.extrinsic_coef < 0:
            raise ValueError("advantage coefficients must be non-negative")


@dataclass
class LossBreakdown:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    intrinsic_value_loss: float = 0.0
    prediction_loss: float = 0.0
    total: float = 0.0
    entropy_coef: float = 0.0
    grad_norm: float = 0.0
    intrinsic_reward: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    """Flattened, valid samples ready for minibatching."""

    obs: np.ndarray
    global_obs: Optional[np.ndarray]
    mask: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray  # the advantage the policy loss uses (combined for RND)
    returns: np.ndarray
    intrinsic_returns: Optional[np.ndarray] = None
    player: Optional[np.ndarray] = None
    intrinsic_reward_mean: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)


def total_loss(net: PolicyValueNet, mb: Batch, algorithm: str, ppo: PpoConfig, rnd: RndConfig,
               entropy_coef: float, use_mask: bool = False,
               with_grad: bool = True) -> tuple[LossBreakdown, Optional[np.ndarray]]:
    """Weighted loss of one minibatch and its gradient w.r.t. every trainable parameter."""
    n = len(mb)
    is_rnd = algorithm == "rnd_ppo"
    out = forward(net, mb.obs, global_obs=mb.global_obs, rnd=is_rnd)
    logp_all = masked_log_softmax(out.logits, mb.mask if use_mask else None)
    rows = np.arange(n)
    new_logp = logp_all[rows, mb.actions]
    adv = mb.advantages
    _, per, dper = dual_clip_policy_loss(new_logp, mb.old_logp, adv, ppo.epsilon, ppo.eta)
    if algorithm == "mappo" and mb.player is not None:
        # mean over players of each player's mean loss
        players, counts = np.unique(mb.player, return_counts=True)
        w = np.zeros(n)
        for p, c in zip(players, counts):
            w[mb.player == p] = 1.0 / (c * len(players))
    else:
        w = np.full(n, 1.0 / n)
    pol = float(np.sum(w * per))
    dlogp = w * dper
    probs = np.exp(logp_all)
    dlogits = -probs * dlogp[:, None]
    dlogits[rows, mb.actions] += dlogp
    ent, dent = masked_entropy(logp_all)
    ent_mean = float(ent.mean())
    vl, dv = value_loss(out.value, mb.returns)
    parts = LossBreakdown(policy_loss=pol, value_loss=vl, entropy=ent_mean, entropy_coef=entropy_coef)
    dint = dpred = None
    if is_rnd:
        wts = rnd.weights
        ivl, div = value_loss(out.intrinsic_value, mb.intrinsic_returns)
        pred = float(np.mean(out.prediction_error))
        parts.intrinsic_value_loss, parts.prediction_loss = ivl, pred
        total = wts.policy * pol + wts.value * vl + wts.intrinsic_value * ivl + wts.prediction * pred
        dlogits *= wts.policy
        dv = wts.value * dv
        dint = wts.intrinsic_value * div
        dpred = np.full(n, wts.prediction / n)
    else:
        total = pol + ppo.value_loss_weight * vl
        dv = ppo.value_loss_weight * dv
    total -= entropy_coef * ent_mean
    dlogits -= entropy_coef * dent / n
    parts.total = float(total)
    if not with_grad:
        return parts, None
    grad = backprop(out.trace, dlogits=dlogits, dvalue=dv, dintrinsic=dint, dprediction=dpred)
    return parts, grad


class Trainer:
    """Owns the working network's optimiser state; one instance per learning agent."""

    def __init__(self, net: PolicyValueNet, algorithm: str = "ppo", ppo: PpoConfig = PpoConfig(),
                 rnd: RndConfig = RndConfig(), use_mask: bool = False, seed: int = 0):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        if (algorithm == "rnd_ppo") != net.spec.rnd or (algorithm == "mappo") != net.spec.mappo:
            raise ValueError(f"network layout does not match algorithm {algorithm!r}")
        self.net = net
        self.algorithm = algorithm
        self.ppo = ppo
        self.rnd = rnd
        self.use_mask = use_mask
        self.adam = AdamState.zeros(net.params.size)
        self.rng = np.random.default_rng(seed)
        self.iteration = 0
        self.dropped_batches = 0
        self.intrinsic_scale = RunningStd()

    def reset_optimizer(self) -> None:
        self.adam = AdamState.zeros(self.net.params.size)

    # ------------------------------------------------------------ data

    def prepare(self, segments: Sequence[Segment]) -> Batch:
        """GAE per segment, then flatten and drop samples of discarded episodes."""
        cols: dict[str, list] = {k: [] for k in (
            "obs", "glob", "mask", "act", "logp", "adv", "ret", "iret", "player", "iadv")}
        ir_means = []
        for seg in segments:
            adv, ret = compute_gae(seg.rewards, seg.values, seg.dones, self.ppo.gamma, self.ppo.lam,
                                   bootstrap=seg.last_values)
            if self.algorithm == "rnd_ppo":
                nxt = np.concatenate([seg.obs[1:], seg.last_obs[None]], axis=0)
                T, S, D = nxt.shape
                out = forward(self.net, nxt.reshape(T * S, D), rnd=True)
                ir = out.prediction_error.reshape(T, S)
                self.intrinsic_scale.update(ir[seg.valid])
                ir = ir / (self.intrinsic_scale.std + 1e-8)
                ir_means.append(float(ir[seg.valid].mean()) if seg.valid.any() else 0.0)
                # non-episodic intrinsic stream: terminals ignored
                iadv, iret = compute_gae(ir, seg.ivalues, np.zeros_like(seg.dones), self.rnd.intrinsic_gamma,
                                         self.ppo.lam, bootstrap=seg.last_ivalues)
                cols["iret"].append(iret[seg.valid])
                cols["iadv"].append(iadv[seg.valid])
            v = seg.valid
            cols["obs"].append(seg.obs[v])
            if seg.global_obs is not None:
                cols["glob"].append(seg.global_obs[v])
            cols["mask"].append(seg.mask[v])
            cols["act"].append(seg.actions[v])
            cols["logp"].append(seg.logp[v])
            cols["adv"].append(adv[v])
            cols["ret"].append(ret[v])
            cols["player"].append(np.broadcast_to(seg.player, seg.valid.shape)[v])
        cat = lambda k: np.concatenate(cols[k]) if cols[k] else None  # noqa: E731
        adv = cat("adv")
        if self.algorithm == "rnd_ppo":
            adv = rnd_combined_advantage(adv, cat("iadv"), self.rnd.extrinsic_coef, self.rnd.intrinsic_coef)
        return Batch(
            obs=cat("obs"), global_obs=cat("glob"), mask=cat("mask"), actions=cat("act"),
            old_logp=cat("logp"), advantages=adv, returns=cat("ret"), intrinsic_returns=cat("iret"),
            player=cat("player"), intrinsic_reward_mean=float(np.mean(ir_means)) if ir_means else 0.0,
        )

    # ------------------------------------------------------------ update

    def train_step(self, batch: Batch) -> Optional[LossBreakdown]:
        """Single epoch of minibatch updates.  Returns None when the batch was dropped."""
        n = len(batch)
        coef = self.ppo.entropy_coef(self.iteration)
        if n == 0:
            return None
        adv = normalize_advantages(batch.advantages) if self.ppo.normalize_advantages else batch.advantages
        order = self.rng.permutation(n)
        mbs = max(1, min(self.ppo.minibatch_size, n))
        snapshot = self.net.params.copy()
        adam_snapshot = AdamState(self.adam.first_moment.copy(), self.adam.second_moment.copy(),
                                  self.adam.step_count)
        acc = LossBreakdown()
        n_mb = 0
        for lo in range(0, n, mbs):
            idx = order[lo:lo + mbs]
            mb = Batch(
                obs=batch.obs[idx], global_obs=None if batch.global_obs is None else batch.global_obs[idx],
                mask=batch.mask[idx], actions=batch.actions[idx], old_logp=batch.old_logp[idx],
                advantages=adv[idx], returns=batch.returns[idx],
                intrinsic_returns=None if batch.intrinsic_returns is None else batch.intrinsic_returns[idx],
                player=None if batch.player is None else batch.player[idx],
            )
            parts, grad = total_loss(self.net, mb, self.algorithm, self.ppo, self.rnd, coef, self.use_mask)
            try:
                if not np.isfinite(parts.total):
                    raise NonFiniteGradient("non-finite loss")
                parts.grad_norm = float(np.linalg.norm(grad))
                adam_step(self.net.params, grad, self.adam, self.ppo.lr, self.ppo.beta1, self.ppo.beta2,
                          max_grad_norm=self.ppo.max_grad_norm)
            except NonFiniteGradient as exc:
                self.net.params[:] = snapshot
                self.adam = adam_snapshot
                self.net.touch()
                self.dropped_batches += 1
                log.warning("batch dropped: %s", exc)
                return None
            self.net.touch()
            for k, v in parts.as_dict().items():
                setattr(acc, k, getattr(acc, k) + v)
            n_mb += 1
        for k, v in acc.as_dict().items():
            setattr(acc, k, v / n_mb)
        acc.entropy_coef = coef
        acc.intrinsic_reward = batch.intrinsic_reward_mean
        self.iteration += 1
        return acc

    def state_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "dropped_batches": self.dropped_batches,
            "adam_step": self.adam.step_count,
            "intrinsic_scale": self.intrinsic_scale.state_dict(),
        }
