"""Top-3 screening of recent checkpoints and the merged top-model pool."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .arena import RoundRobinResult, Runner, round_robin

log = logging.getLogger(__name__)

TOP_K = 3
SCREEN_WINDOW = 10
GAMES_PER_PAIR = 6


def rank_candidates(players: Sequence[str], rr: Optional[RoundRobinResult]) -> list[str]:
    """By Elo, then win rate, then newer (later in ``players``)."""
    if rr is None:
        return list(reversed(players))
    order = {p: i for i, p in enumerate(players)}
    return sorted(players, key=lambda p: (-rr.elo.rating(p), -rr.win_rate(p), -order[p]))


@dataclass
class ScreenResult:
    top: list[str]
    round_robin: Optional[RoundRobinResult]
    certificates: list = field(default_factory=list)


def screen_top3(snapshot: Sequence[str], runner: Runner, games_per_pair: int = GAMES_PER_PAIR,
                window: int = SCREEN_WINDOW, seed: int = 0,
                certify: Optional[Callable[[str, float], object]] = None) -> ScreenResult:
    """Round-robin over the newest ``window`` checkpoints; the top three are certified."""
    if not snapshot:
        raise ValueError("nothing to screen")
    cands = list(snapshot)[-window:]
    rr = round_robin(cands, games_per_pair, runner, seed) if len(cands) > 1 else None
    top = rank_candidates(cands, rr)[:TOP_K]
    certs = [certify(c, rr.elo.rating(c) if rr else 0.0) for c in top] if certify else []
    return ScreenResult(top, rr, certs)


@dataclass
class TopModelPool:
    members: list[str] = field(default_factory=list)
    ratings: dict[str, float] = field(default_factory=dict)
    pruned: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"members": list(self.members), "ratings": dict(self.ratings), "pruned": list(self.pruned),
                "history": list(self.history)}

    @classmethod
    def from_dict(cls, d: dict) -> "TopModelPool":
        return cls(list(d["members"]), dict(d["ratings"]), list(d["pruned"]), list(d.get("history", [])))


def merge_and_prune(pool: TopModelPool, new_top: Sequence[str], runner: Runner,
                    games_per_pair: int = GAMES_PER_PAIR, seed: int = 0,
                    certify: Optional[Callable[[str, float], object]] = None) -> TopModelPool:
    """Evaluate the union of the current members and ``new_top``; keep the best three."""
    union = list(dict.fromkeys(list(pool.members) + list(new_top)))
    rr = round_robin(union, games_per_pair, runner, seed) if len(union) > 1 else None
    if not pool.members and len(union) <= TOP_K:
        keep = list(new_top)
    else:
        keep = rank_candidates(union, rr)[:TOP_K]
    dropped = [p for p in union if p not in keep]
    ratings = {p: (rr.elo.rating(p) if rr else 0.0) for p in keep}
    if certify:
        for p in keep:
            certify(p, ratings[p])
    out = TopModelPool(keep, ratings, pool.pruned + dropped,
                       pool.history + [{"union": union, "kept": keep, "dropped": dropped}])
    if dropped:
        log.info("top pool pruned %s", ", ".join(dropped))
    return out
