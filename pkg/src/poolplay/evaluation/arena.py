"""Matches between named contestants, round-robin scheduling and the outcome log."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from ..football.state import EnvConfig
from ..rollout import Policy, play_matches
from .elo import EloTable

log = logging.getLogger(__name__)

BEHAVIORS = ("goals", "shots", "shots_in_box", "short_passes", "long_passes", "slides",
             "possession_steps_self", "possession_steps_opponent", "ball_recoveries", "out_of_bounds")


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Game:
    home: str
    away: str
    seed: int


@dataclass
class MatchOutcome:
    home: str
    away: str
    goals: tuple[int, int]
    length: int
    seed: int = 0
    behaviors: tuple[dict, dict] = field(default_factory=lambda: ({}, {}))
    occupancy: Optional[tuple[np.ndarray, np.ndarray]] = None  # ego frame per side

    @property
    def winner(self) -> Optional[str]:
        if self.goals[0] == self.goals[1]:
            return None
        return self.home if self.goals[0] > self.goals[1] else self.away

    def score_for(self, player: str) -> float:
        w = self.winner
        return 0.5 if w is None else float(w == player)

    def side_of(self, player: str) -> int:
        if player == self.home:
            return 0
        if player == self.away:
            return 1
        raise KeyError(player)

    def to_dict(self) -> dict:
        return {"home": self.home, "away": self.away, "goals": list(self.goals), "length": self.length,
                "seed": self.seed, "winner": self.winner, "behaviors": list(self.behaviors)}

    @classmethod
    def from_dict(cls, d: dict) -> "MatchOutcome":
        return cls(d["home"], d["away"], tuple(d["goals"]), int(d["length"]), int(d.get("seed", 0)),
                   tuple(d.get("behaviors", [{}, {}])))


def behaviors_from_counters(counters: Sequence[dict]) -> tuple[dict, dict]:
    out = []
    for t in (0, 1):
        c, o = counters[t], counters[1 - t]
        b = {k: int(c[k]) for k in BEHAVIORS if k in c}
        b["possession_steps_self"] = int(c["possession_steps"])
        b["possession_steps_opponent"] = int(o["possession_steps"])
        out.append(b)
    return out[0], out[1]


class Runner(Protocol):
    def __call__(self, games: Sequence[Game]) -> list[Optional[MatchOutcome]]: ...


class PolicyRunner:
    """Plays games in the mini-football env; ``resolve`` maps a name to a policy."""

    def __init__(self, resolve: Callable[[str], Policy], env_config: EnvConfig = EnvConfig(),
                 batch: int = 64):
        self.resolve = resolve
        self.env_config = env_config
        self.batch = batch

    def __call__(self, games: Sequence[Game]) -> list[Optional[MatchOutcome]]:
        out: list[Optional[MatchOutcome]] = [None] * len(games)
        playable, policies = [], {}
        for i, g in enumerate(games):
            try:
                for name in (g.home, g.away):
                    if name not in policies:
                        policies[name] = self.resolve(name)
                playable.append(i)
            except Exception as exc:  # unloadable contestant: skip the pair, keep going
                log.error("skipping %s vs %s: %s", g.home, g.away, exc)
        recs = play_matches([(policies[games[i].home], policies[games[i].away]) for i in playable],
                            self.env_config, [games[i].seed for i in playable], batch=self.batch)
        for i, r in zip(playable, recs):
            g = games[i]
            out[i] = MatchOutcome(g.home, g.away, r.score, r.length, g.seed,
                                  behaviors_from_counters(r.counters), tuple(r.occupancy))
        return out


def schedule_round_robin(players: Sequence[str], games_per_pair: int, seed: int = 0) -> list[Game]:
    """Each unordered pair plays ``games_per_pair`` games with alternating home side."""
    rng = np.random.default_rng(seed)
    games = []
    for a, b in combinations(players, 2):
        for g in range(games_per_pair):
            home, away = (a, b) if g % 2 == 0 else (b, a)
            games.append(Game(home, away, int(rng.integers(2**31))))
    return games


@dataclass
class RoundRobinResult:
    elo: EloTable
    outcomes: list[MatchOutcome]

    def win_rate(self, player: str) -> float:
        mine = [o for o in self.outcomes if player in (o.home, o.away)]
        return float(np.mean([o.score_for(player) for o in mine])) if mine else 0.0


def round_robin(players: Sequence[str], games_per_pair: int, runner: Runner, seed: int = 0,
                elo: Optional[EloTable] = None, passes: int = 2) -> RoundRobinResult:
    if len(players) < 2:
        raise ValueError("round robin needs at least two players")
    if len(set(players)) != len(players):
        raise ValueError("duplicate players")
    games = schedule_round_robin(players, games_per_pair, seed)
    outcomes = [o for o in runner(games) if o is not None]
    table = elo if elo is not None else EloTable()
    for p in players:
        table.add(p)
    results = [(o.home, o.away, o.score_for(o.home)) for o in outcomes]
    table.process(results, np.random.default_rng([seed, 7]), passes=passes)
    return RoundRobinResult(table, outcomes)


def write_outcomes(path: os.PathLike, outcomes: Sequence[MatchOutcome], append: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w") as f:
        for o in outcomes:
            f.write(json.dumps(o.to_dict(), sort_keys=True) + "\n")


def read_outcomes(path: os.PathLike) -> list[MatchOutcome]:
    out = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(MatchOutcome.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise EvaluationError(f"{path}:{n}: bad outcome record ({e})") from None
    return out


class LatentSkillRunner:
    """Synthetic games: home wins with probability logistic on the skill gap.

    Skills are on the Elo scale.  A fixed share of games is drawn.  Used to
    test screening without playing football.
    """

    def __init__(self, skills: dict[str, float], draw_prob: float = 0.1):
        self.skills = skills
        self.draw_prob = draw_prob

    def __call__(self, games: Sequence[Game]) -> list[Optional[MatchOutcome]]:
        out = []
        for g in games:
            rng = np.random.default_rng(g.seed)
            if rng.random() < self.draw_prob:
                goals = (1, 1)
            else:
                p = 1.0 / (1.0 + 10.0 ** ((self.skills[g.away] - self.skills[g.home]) / 400.0))
                goals = (1, 0) if rng.random() < p else (0, 1)
            out.append(MatchOutcome(g.home, g.away, goals, 1, g.seed))
        return out
