"""The league loop: scheduler, pool cadences, screening, explorer sync, manifest."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import tempfile
import time
import uuid
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..checkpoint import read_checkpoint, write_checkpoint
from ..evaluation import PolicyRunner, TopModelPool, merge_and_prune, screen_top3
from ..matchmaking import PairStats
from ..modelpools import DMMP, DPMP, MAIN, POLICY_EXPLORER, SHMP, SMP, PoolRegistry
from ..netcore import AdamState, PolicyValueNet
from ..rollout import NetPolicy, ScriptedPolicy
from .agent import SCRIPTED, LeagueAgent, transfer_parameters
from .config import LeagueConfig, config_from_dict

log = logging.getLogger(__name__)

MANIFEST = "run.json"
RUN_VERSION = 1
METRIC_FIELDS = (
    "step", "agent", "iteration", "samples", "episodes", "wins", "draws", "losses", "goals_for",
    "goals_against", "vs_self", "vs_scripted", "dropped", "crashes", "policy_loss", "value_loss", "entropy",
    "intrinsic_value_loss", "prediction_loss", "total", "entropy_coef", "grad_norm", "intrinsic_reward",
)
ELO_FIELDS = ("step", "agent", "iteration", "checkpoint", "rank", "elo")


class RunError(RuntimeError):
    pass


class PoolView:
    """Registry facade exposing only the enabled pool kinds to matchmaking."""

    def __init__(self, registry: PoolRegistry, enabled: tuple[str, ...]):
        self.registry = registry
        self.enabled = set(enabled)

    def snapshot(self, agent: str):
        return [(n, e) for n, e in self.registry.snapshot(agent) if n.rsplit("/", 1)[1] in self.enabled]


def main_settings_hash(cfg: LeagueConfig) -> str:
    main = next(a for a in cfg.agents if a.kind == MAIN)
    blob = {"agent": dataclasses.asdict(main), "ppo": dataclasses.asdict(cfg.agent_ppo(main)),
            "env": dataclasses.asdict(cfg.env)}
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


class League:
    """Runs every configured agent in one process under a serialized scheduler.

    The scheduler always advances the agent kind furthest behind its resource
    share (then the agent of that kind with the fewest samples), so a fixed
    seed reproduces the same sequence of iterations and metrics.
    """

    def __init__(self, config: LeagueConfig, run_dir: os.PathLike, *, resume: bool = False,
                 fault_hook: Optional[Callable[[int, int], None]] = None,
                 init_from: Optional[PolicyValueNet] = None):
        self.run_dir = Path(run_dir)
        if resume:
            manifest = json.loads((self.run_dir / MANIFEST).read_text())
            config = config_from_dict(manifest["config"])
        self.config = config.validate()
        self.main_hash = main_settings_hash(self.config)
        self.registry = PoolRegistry(self.run_dir / "pools", config.pools.shmp_capacity, config.pools.lhmp_interval)
        self.view = PoolView(self.registry, config.pools.enabled)
        self.agents: dict[str, LeagueAgent] = {}
        for k, a in enumerate(config.agents):
            self.registry.register_agent(a.name, a.kind)
            self.agents[a.name] = LeagueAgent(a, config, self.registry, self.view, seed=config.seed * 1000 + k,
                                              fault_hook=fault_hook)
        self.main = next(a for a in self.agents.values() if a.kind == MAIN)
        self.step_count = 0
        self.top_pool = TopModelPool()
        self.elapsed = 0.0
        self.run_id = uuid.uuid5(uuid.NAMESPACE_OID, f"{config.hash()}-{self.run_dir.resolve()}").hex[:12]
        self._t0 = time.monotonic()
        if resume:
            self._load(manifest)
        else:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            for f in ("metrics.csv", "elo.csv"):
                (self.run_dir / f).unlink(missing_ok=True)
            for agent in self.agents.values():
                if init_from is not None:
                    transfer_parameters(init_from, agent.net)
                self._checkpoint(agent, publish=False)
            self.persist()

    # ------------------------------------------------------------ scheduling

    def pick_agent(self) -> LeagueAgent:
        by_kind: dict[str, list[LeagueAgent]] = {}
        for a in self.agents.values():
            by_kind.setdefault(a.kind, []).append(a)
        shares = self.config.shares
        kind = min(by_kind, key=lambda k: (sum(a.samples for a in by_kind[k]) / shares[k],
                                           list(by_kind).index(k)))
        return min(by_kind[kind], key=lambda a: (a.samples, list(self.agents).index(a.name)))

    def step(self) -> dict:
        agent = self.pick_agent()
        row = agent.iterate()
        self.step_count += 1
        row["step"] = self.step_count
        self._write_metrics(row)
        self._after_iteration(agent)
        return row

    def run(self, steps: Optional[int] = None, seconds: Optional[float] = None,
            main_iterations: Optional[int] = None, persist_every: int = 50) -> dict:
        """Advance until any given budget is spent; ``None`` budgets are ignored."""
        start = time.monotonic()
        done = 0
        while True:
            if steps is not None and done >= steps:
                break
            if seconds is not None and time.monotonic() - start >= seconds:
                break
            if main_iterations is not None and self.main.iteration >= main_iterations:
                break
            if steps is None and seconds is None and main_iterations is None:
                break
            self.step()
            done += 1
            if persist_every and self.step_count % persist_every == 0:
                self.persist()
        self.elapsed += time.monotonic() - start
        for agent in self.agents.values():
            if agent.last_checkpoint is None or self.registry.checkpoints[agent.last_checkpoint].training_step \
                    != agent.iteration:
                self._checkpoint(agent)
        return self.persist()

    # ------------------------------------------------------------ cadences

    def _lhmp_now(self, agent: LeagueAgent) -> float:
        if self.config.pools.lhmp_unit == "seconds":
            return self.elapsed + time.monotonic() - self._t0
        return float(agent.iteration)

    def _checkpoint(self, agent: LeagueAgent, publish: bool = True) -> str:
        """Freeze the agent's parameters; unpublished checkpoints (iteration 0) stay out of the pools."""
        ckpt = self.registry.new_checkpoint(agent.name, agent.net, agent.cfg.algorithm, agent.iteration,
                                            agent.obs_config)
        if publish:
            self.registry.push_short_term(agent.name, ckpt)
            self.registry.snapshot_long_term(agent.name, ckpt, now=self._lhmp_now(agent))
        agent.last_checkpoint = ckpt.checkpoint_id
        return ckpt.checkpoint_id

    def _after_iteration(self, agent: LeagueAgent) -> None:
        cfg = self.config
        it = agent.iteration
        if agent.streak >= cfg.rollback_after:
            self._rollback(agent)
        if agent.streak or not np.isfinite(agent.net.params).all():
            return  # never publish from an unhealthy agent
        if it % cfg.pools.shmp_every == 0:
            self._checkpoint(agent)
        if it % cfg.evaluation.screen_every == 0 and {SMP, DPMP, DMMP} & set(cfg.pools.enabled):
            self.screen(agent)
        if agent.kind == MAIN and it % cfg.sync_every == 0:
            self.sync_explorers()
        if agent.kind == MAIN and cfg.evaluation.top_pool_every and it % cfg.evaluation.top_pool_every == 0:
            self.update_top_pool()

    def _rollback(self, agent: LeagueAgent) -> None:
        cid = agent.last_checkpoint
        log.warning("%s: %d dropped batches in a row, rolling back to %s", agent.name, agent.streak, cid)
        agent.restore(self.registry.load_net(cid))
        agent.streak = 0
        agent.rollbacks += 1

    def runner(self) -> PolicyRunner:
        def resolve(name: str):
            if name == SCRIPTED:
                return ScriptedPolicy()
            ckpt = self.registry.checkpoints[name]
            return NetPolicy(self.registry.load_net(name), ckpt.obs_config, name)

        return PolicyRunner(resolve, self.config.env)

    def screen(self, agent: LeagueAgent) -> list[str]:
        snap = self.registry.pool(agent.name, SHMP).entries
        if not snap:
            return []
        ev = self.config.evaluation
        res = screen_top3(snap, self.runner(), ev.games_per_pair, ev.window,
                          seed=self.config.seed * 7919 + self.step_count, certify=self.registry.certify)
        for cid, cert in zip(res.top, res.certificates):
            self.registry.admit_superior(agent.name, self.registry.checkpoints[cid], cert)
        if res.round_robin is not None:
            rows = [{"step": self.step_count, "agent": agent.name, "iteration": agent.iteration, "checkpoint": c,
                     "rank": r, "elo": round(res.round_robin.elo.rating(c), 6)} for r, c in enumerate(res.top, 1)]
            self._append_csv("elo.csv", ELO_FIELDS, rows)
        return res.top

    def sync_explorers(self) -> list[str]:
        """Policy explorers restart from the main agent's current parameters."""
        synced = []
        for a in self.agents.values():
            if a.kind != POLICY_EXPLORER:
                continue
            transfer_parameters(self.main.net, a.net)
            a.trainer.reset_optimizer()
            synced.append(a.name)
        if synced:
            log.info("synced %s from main at iteration %d", ", ".join(synced), self.main.iteration)
        return synced

    def update_top_pool(self) -> TopModelPool:
        top = self.screen(self.main)
        if top:
            self.top_pool = merge_and_prune(self.top_pool, top, self.runner(),
                                            self.config.evaluation.games_per_pair,
                                            seed=self.config.seed + self.step_count, certify=self.registry.certify)
        return self.top_pool

    # ------------------------------------------------------------ logs

    def _append_csv(self, name: str, fields, rows) -> None:
        path = self.run_dir / name
        new = not path.exists()
        with open(path, "a", newline="") as f:
            wr = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
            if new:
                wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def _write_metrics(self, row: dict) -> None:
        self._append_csv("metrics.csv", METRIC_FIELDS, [row])

    # ------------------------------------------------------------ manifest

    def persist(self) -> dict:
        if main_settings_hash(self.config) != self.main_hash:
            raise RunError("main-agent settings changed during the run")
        work = self.run_dir / "working"
        work.mkdir(parents=True, exist_ok=True)
        agents = {}
        for a in self.agents.values():
            ck = self.registry.checkpoints[a.last_checkpoint]
            write_checkpoint(work / f"{a.name}.ckpt", dataclasses.replace(ck, training_step=a.iteration), a.net)
            np.savez(work / f"{a.name}.adam.npz", m=a.trainer.adam.first_moment, v=a.trainer.adam.second_moment,
                     t=a.trainer.adam.step_count)
            agents[a.name] = {
                "iteration": a.iteration, "samples": a.samples, "episodes": a.episodes, "segments": a.segments,
                "last_checkpoint": a.last_checkpoint, "streak": a.streak, "rollbacks": a.rollbacks,
                "trainer": a.trainer.state_dict(), "stats": a.stats.state_dict(),
                "crashes": a.collector.crashes, "env_steps": a.collector.env_steps,
                "rng": {"collector": _py_state(a.collector.rng.getstate()),
                        "sampler": a.np_rng.bit_generator.state,
                        "trainer": a.trainer.rng.bit_generator.state},
            }
        self.registry.persist()
        manifest = {
            "version": RUN_VERSION, "run_id": self.run_id, "config": self.config.to_dict(),
            "config_hash": self.config.hash(), "main_settings_hash": self.main_hash, "step": self.step_count,
            "elapsed_seconds": self.elapsed, "agents": agents, "top_pool": self.top_pool.to_dict(),
            "pools": "pools/manifest.json", "metrics": "metrics.csv", "elo": "elo.csv",
        }
        fd, tmp = tempfile.mkstemp(dir=self.run_dir, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w") as f:
            json.dump(manifest, f, indent=1, sort_keys=True)
        os.replace(tmp, self.run_dir / MANIFEST)
        return manifest

    def _load(self, manifest: dict) -> None:
        if manifest.get("version") != RUN_VERSION:
            raise RunError(f"run manifest version {manifest.get('version')!r} is not {RUN_VERSION}")
        if manifest["main_settings_hash"] != self.main_hash:
            raise RunError("main-agent settings differ from the run being resumed")
        self.registry = PoolRegistry.load(self.run_dir / "pools")
        self.view.registry = self.registry
        self.step_count = int(manifest["step"])
        self.elapsed = float(manifest.get("elapsed_seconds", 0.0))
        self.top_pool = TopModelPool.from_dict(manifest["top_pool"])
        work = self.run_dir / "working"
        for name, st in manifest["agents"].items():
            a = self.agents[name]
            a.registry = self.registry
            _, net = read_checkpoint(work / f"{name}.ckpt")
            a.net.set_params(net.params)
            z = np.load(work / f"{name}.adam.npz")
            a.trainer.adam = AdamState(z["m"].copy(), z["v"].copy(), int(z["t"]))
            tr = st["trainer"]
            a.trainer.iteration = int(tr["iteration"])
            a.trainer.dropped_batches = int(tr["dropped_batches"])
            a.trainer.intrinsic_scale.load_state_dict(tr["intrinsic_scale"])
            a.iteration, a.samples, a.episodes = int(st["iteration"]), int(st["samples"]), int(st["episodes"])
            a.segments = int(st["segments"])
            a.last_checkpoint, a.streak, a.rollbacks = st["last_checkpoint"], int(st["streak"]), int(st["rollbacks"])
            a.stats = PairStats.from_state(st["stats"])
            a.sampler.stats = a.stats
            a.sampler.registry = self.view
            a.collector.crashes, a.collector.env_steps = int(st["crashes"]), int(st["env_steps"])
            a.collector.rng.setstate(_tuple_state(st["rng"]["collector"]))
            a.np_rng.bit_generator.state = st["rng"]["sampler"]
            a.trainer.rng.bit_generator.state = st["rng"]["trainer"]
        log.info("resumed run %s at step %d", self.run_id, self.step_count)

    # ------------------------------------------------------------ maintenance

    def garbage_collect(self) -> list[str]:
        keep = {a.last_checkpoint for a in self.agents.values()} | set(self.top_pool.members)
        keep |= {f"{a}-000000" for a in self.agents}
        removed = self.registry.garbage_collect(keep)
        self.persist()
        return removed


def _py_state(st):
    return [st[0], list(st[1]), st[2]]


def _tuple_state(st):
    return (st[0], tuple(st[1]), st[2])
