"""Opponent sampling: self-play with probability alpha, otherwise a history model.

Pool mass is proportional to pool size; within a pool, models are weighted by
a softmax over hardness ``(1 - w - 0.5 d) ** p`` at temperature ``T``.
"""

from __future__ import annotations

import csv
import logging
import os
import threading
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

OUTCOMES = ("win", "draw", "loss")
SELF = "self"


class PairStats:
    """Decayed win/draw/loss counts of one training agent against each opponent.

    Every new game first scales the pair's existing counts by ``decay``, so
    stale results fade while the learner improves.
    """

    def __init__(self, decay: float = 0.99, prior_w: float = 0.5, prior_d: float = 0.0):
        if not 0 < decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        self.decay = decay
        self.prior_w = prior_w
        self.prior_d = prior_d
        self.counts: dict[str, np.ndarray] = {}
        self.games: dict[str, int] = {}
        self._lock = threading.Lock()

    def record_result(self, opponent: str, outcome: str) -> None:
        if outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}")
        with self._lock:
            c = self.counts.setdefault(opponent, np.zeros(3))
            c *= self.decay
            c[OUTCOMES.index(outcome)] += 1.0
            self.games[opponent] = self.games.get(opponent, 0) + 1

    def rates(self, opponent: str) -> tuple[float, float]:
        c = self.counts.get(opponent)
        if c is None or c.sum() <= 0:
            return self.prior_w, self.prior_d
        tot = c.sum()
        return float(c[0] / tot), float(c[1] / tot)

    def state_dict(self) -> dict:
        return {"decay": self.decay, "prior_w": self.prior_w, "prior_d": self.prior_d,
                "counts": {k: v.tolist() for k, v in self.counts.items()}, "games": dict(self.games)}

    @classmethod
    def from_state(cls, d: dict) -> "PairStats":
        s = cls(d["decay"], d["prior_w"], d["prior_d"])
        s.counts = {k: np.array(v, dtype=np.float64) for k, v in d["counts"].items()}
        s.games = {k: int(v) for k, v in d["games"].items()}
        return s


def hardness(w: np.ndarray, d: np.ndarray, exponent: float = 1.0) -> np.ndarray:
    return np.power(np.clip(1.0 - np.asarray(w) - 0.5 * np.asarray(d), 0.0, None), exponent)


def pool_selection_probs(sizes: Sequence[int], alpha: float = 0.6) -> np.ndarray:
    """``(1 - alpha) * n_i / n_total``; all zeros when every pool is empty."""
    n = np.asarray(sizes, dtype=np.float64)
    tot = n.sum()
    if tot <= 0:
        return np.zeros_like(n)
    return (1.0 - alpha) * n / tot


def within_pool_weights(scores: Sequence[float], temperature: float = 0.3) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(scores, dtype=np.float64) / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def opponent_probs(w: Sequence[float], d: Sequence[float], p_i: float, temperature: float = 0.3,
                   exponent: float = 1.0) -> np.ndarray:
    return p_i * within_pool_weights(hardness(w, d, exponent), temperature)


@dataclass(frozen=True)
class MatchmakingConfig:
    alpha: float = 0.6
    temperature: float = 0.3
    exponent: float = 1.0
    mode: str = "msm"  # or "uniform": history models drawn uniformly (ablation)
    max_stale_draws: int = 1000

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.mode not in ("msm", "uniform"):
            raise ValueError(f"unknown matchmaking mode {self.mode!r}")


@dataclass
class DistributionEntry:
    pool: str
    checkpoint_id: str
    w: float
    d: float
    score: float
    prob: float


@dataclass
class OpponentDistribution:
    self_prob: float
    entries: list[DistributionEntry]

    @property
    def total(self) -> float:
        return self.self_prob + sum(e.prob for e in self.entries)

    def probabilities(self) -> np.ndarray:
        return np.array([self.self_prob] + [e.prob for e in self.entries])

    def to_csv(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["pool", "checkpoint_id", "w", "d", "score", "P"])
            wr.writerow([SELF, SELF, "", "", "", repr(self.self_prob)])
            for e in self.entries:
                wr.writerow([e.pool, e.checkpoint_id, repr(e.w), repr(e.d), repr(e.score), repr(e.prob)])


def build_distribution(pools: Sequence[tuple[str, Sequence[str]]], stats: PairStats,
                       config: MatchmakingConfig = MatchmakingConfig()) -> OpponentDistribution:
    """Full distribution over {self} and every model of the visible pools."""
    sizes = [len(entries) for _, entries in pools]
    p = pool_selection_probs(sizes, config.alpha)
    if sum(sizes) == 0:
        return OpponentDistribution(1.0, [])
    out = []
    for (name, entries), p_i in zip(pools, p):
        if not entries:
            continue
        rates = np.array([stats.rates(cid) for cid in entries])
        score = hardness(rates[:, 0], rates[:, 1], config.exponent)
        if config.mode == "uniform":
            probs = np.full(len(entries), p_i / len(entries))
        else:
            probs = p_i * within_pool_weights(score, config.temperature)
        out.extend(DistributionEntry(name, cid, float(r[0]), float(r[1]), float(s), float(q))
                   for cid, r, s, q in zip(entries, rates, score, probs))
    return OpponentDistribution(config.alpha, out)


def sample_opponent(dist: OpponentDistribution, rng: np.random.Generator) -> Optional[DistributionEntry]:
    """None means self-play."""
    probs = dist.probabilities()
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, len(probs) - 1)
    return None if k == 0 else dist.entries[k - 1]


class OpponentSampler:
    """Caches one agent's distribution; rebuilt when pools change or after many draws."""

    def __init__(self, registry, agent: str, stats: PairStats, config: MatchmakingConfig = MatchmakingConfig()):
        self.registry = registry
        self.agent = agent
        self.stats = stats
        self.config = config
        self._dist: Optional[OpponentDistribution] = None
        self._key: Optional[tuple] = None
        self._draws = 0
        self.rebuilds = 0

    def distribution(self) -> OpponentDistribution:
        snap = tuple(self.registry.snapshot(self.agent))
        if self._dist is None or snap != self._key or self._draws >= self.config.max_stale_draws:
            self._dist = build_distribution(snap, self.stats, self.config)
            self._key = snap
            self._draws = 0
            self.rebuilds += 1
        return self._dist

    def sample(self, rng: np.random.Generator) -> Optional[DistributionEntry]:
        dist = self.distribution()
        self._draws += 1
        return sample_opponent(dist, rng)
