"""Operations behind the HTTP service: train, eval, play, report, ablate, gc.

Each returns a JSON-ready dict. Paths are local to the machine running the service.
"""

from __future__ import annotations

import csv
import logging
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..checkpoint import read_checkpoint
from ..evaluation import (
    EloTable, EvaluationError, judgment_report, player_heatmap, read_outcomes, round_robin,
    write_matrix_csv, write_outcomes, write_report,
)
from ..football.replay import write_replay
from ..football.state import EnvConfig
from ..league import League, load_config
from ..league.ablation import ARMS, run_ablation
from ..league.config import ConfigError, LeagueConfig
from ..modelpools import POOL_KINDS
from ..rollout import NetPolicy, Policy, ScriptedPolicy, UniformPolicy, play_matches

log = logging.getLogger(__name__)

EVAL_DIR = "eval"
OUTCOMES = "outcomes.jsonl"
REPORT_DIR = "report"
BUILTIN_POLICIES = ("scripted", "uniform")


class OperationError(ValueError):
    """Bad request to an operation; the message is shown to the user as is."""


def _config(config: str | os.PathLike | LeagueConfig) -> LeagueConfig:
    return config if isinstance(config, LeagueConfig) else load_config(config)


def _run_summary(league: League) -> dict:
    return {
        "run_dir": str(league.run_dir),
        "run_id": league.run_id,
        "step": league.step_count,
        "iterations": {n: a.iteration for n, a in league.agents.items()},
        "samples": {n: a.samples for n, a in league.agents.items()},
        "pools": dict(sorted(league.registry.sizes().items())),
        "manifest": str(league.run_dir / "run.json"),
    }


def train(run_dir: str | os.PathLike, config: str | os.PathLike | LeagueConfig | None = None, resume: bool = False,
          steps: Optional[int] = None, seconds: Optional[float] = None,
          main_iterations: Optional[int] = None) -> dict:
    """Start (or resume) a league in ``run_dir`` and advance it by the given budget."""
    if resume:
        league = _open_run(run_dir)
    else:
        if config is None:
            raise OperationError("train: a config is required unless resuming")
        league = League(_config(config), run_dir)
    league.run(steps=steps, seconds=seconds, main_iterations=main_iterations)
    return _run_summary(league)


def _open_run(run_dir: str | os.PathLike) -> League:
    if not (Path(run_dir) / "run.json").exists():
        raise OperationError(f"{run_dir}: no run manifest")
    return League(None, run_dir, resume=True)


def _pool_members(league: League, pool: str, limit: int) -> list[str]:
    if pool == "top":
        members = list(league.top_pool.members)
    else:
        owner, _, kind = pool.partition("/")
        if kind not in POOL_KINDS:
            raise OperationError(f"pool: expected OWNER/KIND with KIND in {POOL_KINDS} or 'top', got {pool!r}")
        try:
            members = list(league.registry.pool(owner, kind).entries)
        except KeyError:
            raise OperationError(f"pool: no pool {pool!r} in this run") from None
    return members[-limit:] if limit else members


def evaluate(run_dir: str | os.PathLike, pool: str, games: int, seed: int = 0, limit: int = 10,
             include_scripted: bool = True) -> dict:
    """Round robin among a pool's newest members; writes the outcome log and heatmaps under ``eval/``."""
    if games < 1:
        raise OperationError("games: must be at least 1")
    league = _open_run(run_dir)
    players = _pool_members(league, pool, limit)
    if include_scripted:
        players.append("scripted")
    if len(players) < 2:
        hint = " (the top pool fills only when evaluation.top_pool_every > 0)" if pool == "top" else ""
        raise OperationError(f"pool {pool!r} has fewer than two members to evaluate{hint}")
    rr = round_robin(players, games, league.runner(), seed=seed)
    out = Path(run_dir) / EVAL_DIR
    write_outcomes(out / OUTCOMES, rr.outcomes, append=False)
    for p in players:
        write_matrix_csv(out / "heatmaps" / f"{p}.csv", player_heatmap(rr.outcomes, p))
    ratings = {p: rr.elo.rating(p) for p in players}
    return {"players": players, "games": len(rr.outcomes), "elo": ratings, "outcomes": str(out / OUTCOMES)}


def resolve_policy(spec: str) -> Policy:
    """``scripted``, ``uniform`` or a path to a checkpoint file."""
    if spec == "scripted":
        return ScriptedPolicy()
    if spec == "uniform":
        return UniformPolicy()
    path = Path(spec)
    if not path.is_file():
        raise OperationError(f"{spec}: not a checkpoint file (or one of {BUILTIN_POLICIES})")
    ckpt, net = read_checkpoint(path)
    return NetPolicy(net, ckpt.obs_config, ckpt.checkpoint_id)


def play(a: str, b: str, seed: int, replay: Optional[str | os.PathLike] = None,
         env: Optional[EnvConfig] = None) -> dict:
    """One match, ``a`` at home; optionally writes the line-delimited replay."""
    rec = play_matches([(resolve_policy(a), resolve_policy(b))], env or EnvConfig(), [seed],
                       with_replay=replay is not None)[0]
    if replay is not None:
        write_replay(replay, rec.replay)
    return {"a": a, "b": b, "seed": seed, "score": list(rec.score), "length": rec.length,
            "replay": None if replay is None else str(replay)}


def report(run_dir: str | os.PathLike, seed: int = 0) -> dict:
    """Ranked judgment report rendered from the run's evaluation log."""
    d = Path(run_dir)
    log_path = d / EVAL_DIR / OUTCOMES
    if not log_path.exists():
        raise OperationError(f"{log_path}: no evaluation log; run eval first")
    try:
        outcomes = read_outcomes(log_path)
    except EvaluationError as e:
        raise OperationError(str(e)) from None
    players: list[str] = []
    for o in outcomes:
        for p in (o.home, o.away):
            if p not in players:
                players.append(p)
    elo = EloTable()
    for p in players:
        elo.add(p)
    elo.process([(o.home, o.away, o.score_for(o.home)) for o in outcomes], np.random.default_rng([seed, 7]))
    heat = {p: f"{EVAL_DIR}/heatmaps/{p}.csv" for p in players if (d / EVAL_DIR / "heatmaps" / f"{p}.csv").exists()}
    rows = judgment_report(players, elo, outcomes, heat)
    csv_path, txt_path = write_report(rows, d / REPORT_DIR)
    return {"csv": str(csv_path), "text": str(txt_path), "summary": txt_path.read_text(),
            "ranking": [r.checkpoint for r in rows]}


def ablate(config: str | os.PathLike | LeagueConfig, arms: Sequence[str], root: str | os.PathLike,
           main_iterations: int, games_per_pair: int = 6, repeats: int = 1, seed: int = 0) -> dict:
    unknown = [a for a in arms if a not in ARMS]
    if unknown:
        raise OperationError(f"arms: unknown {unknown}; choose from {sorted(ARMS)}")
    if main_iterations < 1:
        raise OperationError("main_iterations: must be at least 1")
    table, results = run_ablation(_config(config), arms, root, main_iterations, games_per_pair=games_per_pair,
                                  repeats=repeats, seed=seed)
    return {"elo": {r.arm: table.rating(r.arm) for r in results}, "table": str(Path(root) / "ablation.csv"),
            "checkpoints": {r.arm: str(r.path) for r in results}}


def gc(run_dir: str | os.PathLike) -> dict:
    """Delete payloads no pool, agent or top-pool entry references any more."""
    removed = _open_run(run_dir).garbage_collect()
    return {"removed": removed, "count": len(removed)}


def read_metrics(run_dir: str | os.PathLike) -> list[dict]:
    with open(Path(run_dir) / "metrics.csv", newline="") as f:
        return list(csv.DictReader(f))


__all__ = ["OperationError", "ConfigError", "train", "evaluate", "play", "report", "ablate", "gc",
           "resolve_policy", "read_metrics", "BUILTIN_POLICIES"]
