"""Post-run checks of a league: progress of the main agent and behaviour differences."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..evaluation import Game, behavior_stats, round_robin
from ..modelpools import LHMP, MAIN
from .ablation import run_ablation
from .agent import SCRIPTED, build_net
from .config import LeagueConfig
from .orchestrator import League

log = logging.getLogger(__name__)


@dataclass
class ProgressReport:
    final: str
    initial: str
    opponents: list[str]
    ratings: dict[str, float]
    elo_gain: float
    scripted_win_rate: float
    scripted_games: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def frozen_opponents(league: League, agent: str = "main", n_lhmp: int = 3) -> tuple[str, str, list[str]]:
    """(initial, final, LHMP picks) for an agent; LHMP picks are evenly spaced, excluding both ends."""
    a = league.agents[agent]
    initial = f"{agent}-000000"
    final = a.last_checkpoint
    lhmp = [c for c in league.registry.pool(agent, LHMP).entries if c not in (initial, final)]
    if len(lhmp) > n_lhmp:
        idx = np.linspace(0, len(lhmp) - 1, n_lhmp).round().astype(int)
        lhmp = [lhmp[i] for i in idx]
    return initial, final, lhmp


def assess_progress(league: League, agent: str = "main", games_per_pair: int = 10, scripted_games: int = 50,
                    seed: int = 0) -> ProgressReport:
    """Elo of the final checkpoint against its own start, the scripted baseline and LHMP snapshots."""
    initial, final, lhmp = frozen_opponents(league, agent)
    players = [initial, SCRIPTED] + lhmp + [final]
    runner = league.runner()
    rr = round_robin(players, games_per_pair, runner, seed=seed)
    games = [Game(final, SCRIPTED, 10_000 + s) if s % 2 == 0 else Game(SCRIPTED, final, 10_000 + s)
             for s in range(scripted_games)]
    outs = [o for o in runner(games) if o is not None]
    wins = sum(o.winner == final for o in outs)
    ratings = {p: rr.elo.rating(p) for p in players}
    return ProgressReport(final, initial, players, ratings, ratings[final] - ratings[initial],
                          wins / max(len(outs), 1), len(outs))


def possession_gap(league: League, a: str = "main", b: str = "pe_possession", games: int = 100,
                   opponent: Optional[str] = SCRIPTED, seed: int = 0) -> dict:
    """Normalized possession_steps_self of two agents' latest checkpoints over ``games`` each."""
    ca, cb = league.agents[a].last_checkpoint, league.agents[b].last_checkpoint
    runner = league.runner()
    out = {}
    for cid in (ca, cb):
        opp = opponent or cid
        gs = [Game(cid, opp, seed + s) if s % 2 == 0 else Game(opp, cid, seed + s) for s in range(games)]
        out[cid] = [o for o in runner(gs) if o is not None]
    norm = behavior_stats(out)
    pa, pb = norm[ca]["possession_steps_self"], norm[cb]["possession_steps_self"]
    return {"a": ca, "b": cb, "possession_a": pa, "possession_b": pb, "gap": pb - pa}


def desk_trial(config: LeagueConfig, run_dir, minutes: float, chunk_seconds: float = 60.0) -> dict:
    """Train a league for ``minutes`` of wall clock, then assess its main agent and possession explorer."""
    league = League(config, run_dir)
    start = time.monotonic()
    while time.monotonic() - start < minutes * 60:
        league.run(seconds=min(chunk_seconds, minutes * 60 - (time.monotonic() - start)))
        log.info("seed %d: %.0fs, main iteration %d", config.seed, time.monotonic() - start, league.main.iteration)
    progress = assess_progress(league, seed=config.seed)
    return {"seed": config.seed, "main_iterations": league.main.iteration, "progress": progress.as_dict(),
            "possession": possession_gap(league, seed=config.seed)}


def ablation_trial(config: LeagueConfig, root, main_iterations: int, games_per_pair: int = 6,
                   repeats: int = 3) -> dict[str, float]:
    """Full league vs self-play only vs uniform sampling, all from one shared start."""
    start = build_net(next(a for a in config.agents if a.kind == MAIN), config, config.seed)
    table, _ = run_ablation(config, ["original", "ablation5", "random_sampling"], root, main_iterations,
                            start=start, games_per_pair=games_per_pair, repeats=repeats, seed=config.seed)
    return {arm: table.rating(arm) for arm in ("original", "ablation5", "random_sampling")}
