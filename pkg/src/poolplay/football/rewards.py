"""Reward shaping: turns step events into per-player rewards for one team."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .dynamics import Event

GOAL_CLIP = 3


@dataclass(frozen=True)
class RewardConfig:
    goal: float = 1.0
    lose_goal: float = -1.0
    win: float = 2.0
    lose: float = -2.0
    get_possession: float = 0.2
    lose_possession: float = -0.2
    out_of_bounds: float = -0.001
    hold_ball: float = 0.0003
    secondary_attack: float = 0.1
    successful_slide: float = 0.1
    # optional shaping terms; goal/win/possession/out-of-bounds are always on
    use_hold_ball: bool = False
    use_secondary_attack: bool = False
    use_successful_slide: bool = False
    goal_clip: bool = False


# team rewards reach every player of the team; the rest only the acting player
TEAM_REWARDS = frozenset({"goal", "lose_goal", "win", "lose", "get_possession", "lose_possession"})


def goal_difference(score: tuple[int, int] | list[int], team: int, clip: bool) -> int:
    diff = score[team] - score[1 - team]
    if clip:
        diff = max(-GOAL_CLIP, min(GOAL_CLIP, diff))
    return diff


def reward_terms(events: Iterable[Event], config: RewardConfig, team: int) -> list[tuple[str, int, float]]:
    """(term, player or -1 for team-wide, value) for every rewarded event."""
    terms = []
    for e in events:
        k = e.kind
        if k == "goal":
            terms.append(("goal", -1, config.goal) if e.team == team else ("lose_goal", -1, config.lose_goal))
        elif k == "possession":
            if e.team == team:
                terms.append(("get_possession", -1, config.get_possession))
            else:
                terms.append(("lose_possession", -1, config.lose_possession))
        elif k == "result":
            diff = goal_difference((e.player, e.other), team, config.goal_clip)
            if diff > 0:
                terms.append(("win", -1, config.win))
            elif diff < 0:
                terms.append(("lose", -1, config.lose))
        elif e.team != team:
            continue
        elif k == "out_of_bounds":
            terms.append(("out_of_bounds", e.player, config.out_of_bounds))
        elif k == "hold_ball" and config.use_hold_ball:
            terms.append(("hold_ball", e.player, config.hold_ball))
        elif k == "secondary_attack" and config.use_secondary_attack:
            terms.append(("secondary_attack", e.player, config.secondary_attack))
        elif k == "slide_success" and config.use_successful_slide:
            terms.append(("successful_slide", e.player, config.successful_slide))
    return terms


def compute_rewards(events: Iterable[Event], config: RewardConfig, team: int, n_players: int) -> list[float]:
    """Per-player rewards for ``team`` (indices 0..n_players-1)."""
    out = [0.0] * n_players
    for _, player, value in reward_terms(events, config, team):
        if player < 0:
            for i in range(n_players):
                out[i] += value
        elif player < n_players:
            out[player] += value
    return out
