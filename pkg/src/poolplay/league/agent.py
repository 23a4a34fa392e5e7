"""One learning agent of the league: network, trainer, rollout collector, opponent sampler."""

from __future__ import annotations

import logging
import math
import random
from collections import OrderedDict
from typing import Callable, Optional

import numpy as np

from ..checkpoint import ObsConfig
from ..football.observation import encoder_for
from ..football.rewards import RewardConfig
from ..football.scenarios import default_scenarios, pick_scenario, reset_scenario
from ..football.state import reset_match
from ..matchmaking import OpponentSampler, PairStats
from ..modelpools import PoolRegistry
from ..netcore import NetSpec, PolicyValueNet
from ..rlalgos import Trainer
from ..rollout import NetPolicy, ScriptedPolicy, SegmentCollector
from .config import AgentConfig, LeagueConfig

log = logging.getLogger(__name__)

SCRIPTED = "scripted"
SELF = "self"
POLICY_CACHE = 64


def build_net(cfg: AgentConfig, league: LeagueConfig, seed: int) -> PolicyValueNet:
    enc = encoder_for(league.env)
    spec = NetSpec(
        obs_dim=enc.obs_dim(cfg.history_depth),
        n_actions=league.env.n_actions,
        torso_width=league.torso_width,
        head_width=league.head_width,
        global_obs_dim=enc.global_dim + len(league.env.controlled) if cfg.algorithm == "mappo" else None,
        rnd_embed_dim=league.rnd.embed_dim if cfg.algorithm == "rnd_ppo" else None,
    )
    return PolicyValueNet(spec, seed=seed)


def transfer_parameters(src: PolicyValueNet, dst: PolicyValueNet) -> list[str]:
    """Copy every layer both nets share into ``dst``; returns the copied layer names.

    A wider first torso layer (history input) receives the source weights in
    its leading columns and zeros elsewhere, so on zero-padded history the
    two nets compute the same function.
    """
    copied = []
    src_specs = {s.name: s for s in src.space.specs}
    out = dst.params.copy()
    for s in dst.space.specs:
        t = src_specs.get(s.name)
        if t is None or t.out_dim != s.out_dim:
            continue
        a, b, c = dst.space.offsets[s.name]
        sa, sb, sc = src.space.offsets[s.name]
        if t.in_dim == s.in_dim:
            out[a:c] = src.params[sa:sc]
        elif s.name == "torso.0" and t.in_dim < s.in_dim:
            w = np.zeros((s.out_dim, s.in_dim))
            w[:, : t.in_dim] = src.params[sa:sb].reshape(t.out_dim, t.in_dim)
            out[a:b] = w.ravel()
            out[b:c] = src.params[sb:sc]
        else:
            continue
        copied.append(s.name)
    dst.set_params(out)
    return copied


class LeagueAgent:
    def __init__(self, cfg: AgentConfig, league: LeagueConfig, registry: PoolRegistry, view,
                 seed: int, fault_hook: Optional[Callable[[int, int], None]] = None):
        self.cfg = cfg
        self.name = cfg.name
        self.league = league
        self.registry = registry
        self.net = build_net(cfg, league, seed)
        self.obs_config = ObsConfig(cfg.history_depth, cfg.use_mask, cfg.goal_clip)
        self.policy = NetPolicy(self.net, self.obs_config, cfg.name)
        self.trainer = Trainer(self.net, cfg.algorithm, league.agent_ppo(cfg), league.rnd, cfg.use_mask, seed)
        self.stats = PairStats()
        self.sampler = OpponentSampler(view, cfg.name, self.stats, league.matchmaking)
        self.np_rng = np.random.default_rng([seed, 11])
        self.scripted = ScriptedPolicy()
        self._policies: OrderedDict[str, NetPolicy] = OrderedDict()
        self._scenarios = list(default_scenarios(league.env).values())
        rewards = RewardConfig(use_hold_ball=cfg.hold_ball, goal_clip=cfg.goal_clip)
        self.collector = SegmentCollector(league.env, league.n_envs, league.seg_len, rewards, self._opponent,
                                          reset_fn=self._reset, seed=seed, fault_hook=fault_hook)
        per_segment = league.n_envs * league.seg_len * len(league.env.controlled)
        self.segments_per_iteration = max(1, math.ceil(league.ppo.batch_size / per_segment))
        self.iteration = 0
        self.samples = 0
        self.episodes = 0
        self.segments = 0
        self.last_checkpoint: Optional[str] = None
        self.streak = 0
        self.rollbacks = 0

    @property
    def kind(self) -> str:
        return self.cfg.kind

    # ------------------------------------------------------------ rollout hooks

    def _reset(self, rng: random.Random):
        cfg = self.league.env
        if rng.random() < self.league.scenario_mix:
            return reset_scenario(pick_scenario(self._scenarios, rng), cfg, rng)
        return reset_match(cfg, rng.randrange(2**31), kickoff_team=rng.randrange(2))

    def _opponent(self, rng: random.Random):
        if self.league.builtin_ai > 0 and rng.random() < self.league.builtin_ai:
            return SCRIPTED, self.scripted
        entry = self.sampler.sample(self.np_rng)
        if entry is None:
            return SELF, None
        return entry.checkpoint_id, self.frozen_policy(entry.checkpoint_id)

    def frozen_policy(self, cid: str) -> NetPolicy:
        pol = self._policies.get(cid)
        if pol is None:
            ckpt = self.registry.checkpoints[cid]
            pol = NetPolicy(self.registry.load_net(cid), ckpt.obs_config, cid)
            self._policies[cid] = pol
            if len(self._policies) > POLICY_CACHE:
                self._policies.popitem(last=False)
        else:
            self._policies.move_to_end(cid)
        return pol

    # ------------------------------------------------------------ training

    def iterate(self) -> dict:
        """Collect one batch, train on it once, record opponents' results."""
        segs, results = [], []
        for _ in range(self.segments_per_iteration):
            seg, res = self.collector.collect(self.policy)
            segs.append(seg)
            results.extend(res)
        batch = self.trainer.prepare(segs)
        parts = self.trainer.train_step(batch)
        self.iteration += 1
        self.samples += len(batch)
        self.segments += len(segs)
        self.episodes += len(results)
        for r in results:
            if r.opponent not in (SELF, SCRIPTED):
                self.stats.record_result(r.opponent, r.outcome)
        if parts is None:
            self.streak += 1
        else:
            self.streak = 0
        row = {
            "agent": self.name, "iteration": self.iteration, "samples": len(batch), "episodes": len(results),
            "wins": sum(r.outcome == "win" for r in results), "draws": sum(r.outcome == "draw" for r in results),
            "losses": sum(r.outcome == "loss" for r in results),
            "goals_for": sum(r.goals_for for r in results), "goals_against": sum(r.goals_against for r in results),
            "vs_self": sum(r.opponent == SELF for r in results),
            "vs_scripted": sum(r.opponent == SCRIPTED for r in results),
            "dropped": int(parts is None), "crashes": self.collector.crashes,
        }
        row.update({k: v for k, v in (parts.as_dict() if parts else {}).items()})
        return row

    def restore(self, net: PolicyValueNet) -> None:
        self.net.set_params(net.params)
        self.trainer.reset_optimizer()
