"""Ablation arms: identical training from a shared start, one component changed per arm."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..checkpoint import read_checkpoint, write_checkpoint
from ..evaluation import EloTable, PolicyRunner, round_robin
from ..modelpools import DMMP, DPMP, LHMP, MAIN, POOL_KINDS, SHMP, SMP
from ..netcore import PolicyValueNet
from ..rollout import NetPolicy
from .config import LeagueConfig
from .orchestrator import League

log = logging.getLogger(__name__)


def _pools(*kinds: str) -> dict:
    return {"pools": {"enabled": tuple(kinds)}}


# arm name -> overrides applied to the base config
ARMS: dict[str, dict] = {
    "original": _pools(*POOL_KINDS),
    "ablation1": _pools(SHMP, LHMP, SMP, DPMP),
    "ablation2": _pools(SHMP, LHMP, SMP),
    "ablation3": _pools(SHMP, LHMP),
    "ablation4": _pools(SHMP),
    "ablation5": {"pools": {"enabled": ()}, "matchmaking": {"alpha": 1.0}},
    "random_sampling": {"matchmaking": {"mode": "uniform"}},
    "no_sst": {"scenario_mix": 0.0},
    "builtin_ai": {"builtin_ai": 0.1},
    "action_mask": {"main_use_mask": True},
}
TABLE1_ARMS = ("original", "ablation1", "ablation2", "ablation3", "ablation4", "ablation5")


def arm_config(base: LeagueConfig, arm: str) -> LeagueConfig:
    """Base config with the arm's change applied.

    Arms that cannot use the shared pools train only the main agent, since
    explorers would only ever feed DPMP and DMMP.
    """
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}; choose from {sorted(ARMS)}")
    over = ARMS[arm]
    cfg = base
    if "pools" in over:
        cfg = dataclasses.replace(cfg, pools=dataclasses.replace(cfg.pools, **over["pools"]))
    if "matchmaking" in over:
        cfg = dataclasses.replace(cfg, matchmaking=dataclasses.replace(cfg.matchmaking, **over["matchmaking"]))
    for key in ("scenario_mix", "builtin_ai"):
        if key in over:
            cfg = dataclasses.replace(cfg, **{key: over[key]})
    if over.get("main_use_mask"):
        cfg = dataclasses.replace(cfg, agents=tuple(dataclasses.replace(a, use_mask=True) if a.kind == MAIN else a
                                                    for a in cfg.agents))
    if not {DPMP, DMMP} & set(cfg.pools.enabled):
        main = tuple(a for a in cfg.agents if a.kind == MAIN)
        cfg = dataclasses.replace(cfg, agents=main, shares={MAIN: 1.0})
    return cfg.validate()


@dataclass
class ArmResult:
    arm: str
    checkpoint: str
    path: Path
    main_iterations: int


def train_arm(base: LeagueConfig, arm: str, run_dir: os.PathLike, main_iterations: int,
              start: Optional[PolicyValueNet] = None) -> ArmResult:
    """Train one arm until its main agent has done ``main_iterations`` iterations."""
    cfg = arm_config(base, arm)
    league = League(cfg, run_dir, init_from=start)
    league.run(main_iterations=main_iterations)
    cid = league.main.last_checkpoint
    out = Path(run_dir) / "final_main.ckpt"
    ckpt = league.registry.checkpoints[cid]
    write_checkpoint(out, ckpt, league.registry.load_net(cid))
    return ArmResult(arm, cid, out, league.main.iteration)


def compare_arms(results: Sequence[ArmResult], env_config, games_per_pair: int = 6, seed: int = 0,
                 repeats: int = 1) -> EloTable:
    """Round-robin between the arms' final main checkpoints; Elo averaged over ``repeats`` seeds."""
    policies = {}
    for r in results:
        ckpt, net = read_checkpoint(r.path)
        policies[r.arm] = NetPolicy(net, ckpt.obs_config, r.arm)
    runner = PolicyRunner(policies.__getitem__, env_config)
    names = [r.arm for r in results]
    total = {n: 0.0 for n in names}
    for k in range(repeats):
        rr = round_robin(names, games_per_pair, runner, seed=seed + k)
        for n in names:
            total[n] += rr.elo.rating(n)
    table = EloTable()
    for n in names:
        table.ratings[n] = total[n] / repeats
        table.games[n] = games_per_pair * (len(names) - 1) * repeats
    return table


def run_ablation(base: LeagueConfig, arms: Sequence[str], root: os.PathLike, main_iterations: int,
                 start: Optional[PolicyValueNet] = None, games_per_pair: int = 6, repeats: int = 1,
                 seed: int = 0) -> tuple[EloTable, list[ArmResult]]:
    """Train every arm from the same start with the same budget, then rate them against each other."""
    root = Path(root)
    results = [train_arm(base, arm, root / arm, main_iterations, start) for arm in arms]
    table = compare_arms(results, base.env, games_per_pair, seed, repeats)
    with open(root / "ablation.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["arm", "elo", "main_iterations", "checkpoint"])
        for r in results:
            wr.writerow([r.arm, f"{table.rating(r.arm):.2f}", r.main_iterations, r.checkpoint])
    return table, results
