"""Logistic Elo ratings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

INITIAL_RATING = 1000.0
K_FACTOR = 32.0


def expected_score(ra: float, rb: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


@dataclass
class EloTable:
    initial: float = INITIAL_RATING
    k: float = K_FACTOR
    ratings: dict[str, float] = field(default_factory=dict)
    games: dict[str, int] = field(default_factory=dict)

    def add(self, player: str) -> None:
        if player not in self.ratings:
            self.ratings[player] = self.initial
            self.games[player] = 0

    def rating(self, player: str) -> float:
        return self.ratings.get(player, self.initial)

    def update(self, a: str, b: str, score_a: float) -> None:
        """One game; ``score_a`` is 1 (a wins), 0.5 (draw) or 0 (b wins)."""
        if a == b:
            raise ValueError("a player cannot be rated against itself")
        self.add(a)
        self.add(b)
        ea = expected_score(self.ratings[a], self.ratings[b])
        delta = self.k * (score_a - ea)
        self.ratings[a] += delta
        self.ratings[b] -= delta
        self.games[a] += 1
        self.games[b] += 1

    def process(self, results: Sequence[tuple[str, str, float]], rng: Optional[np.random.Generator] = None,
                passes: int = 2) -> "EloTable":
        """Apply ``results`` ``passes`` times, each pass in a fresh random order."""
        for a, b, _ in results:
            self.add(a)
            self.add(b)
        for _ in range(passes):
            order = rng.permutation(len(results)) if rng is not None else range(len(results))
            for i in order:
                a, b, s = results[i]
                self.update(a, b, s)
        return self

    def ranked(self, players: Optional[Iterable[str]] = None) -> list[tuple[str, float]]:
        names = list(players) if players is not None else list(self.ratings)
        return sorted(((p, self.rating(p)) for p in names), key=lambda t: -t[1])

    def total(self) -> float:
        return float(sum(self.ratings.values()))
