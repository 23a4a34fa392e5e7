"""Deterministic rule-based opponent.

Rules, evaluated in the player's own frame (attacking +x):

1. Without the ball: the outfielder closest to the ball chases it (slides when
   an opponent carries it within reach); the others hold a supporting spot.
2. With the ball and an opponent within one cell: short pass to the open
   teammate ahead, when there is one.
3. With the ball within shooting distance of the goal mouth: shoot.
4. Otherwise dribble towards goal.
"""

from __future__ import annotations

import math

from .actions import DIRECTIONS, MIRROR_DIR, SHORT_PASS, SHOT, SLIDE, move_toward
from .dynamics import cheb
from .state import MatchState

SHOT_DISTANCE = 5


def _ego(state: MatchState, team: int, x: int, y: int) -> tuple[int, int]:
    return (x, y) if team == 0 else (state.config.width - 1 - x, y)


def scripted_action(state: MatchState, team: int, index: int) -> int:
    """Action for one controlled player, expressed in ``team``'s own frame."""
    cfg = state.config
    p = state.players[team][index]
    px, py = _ego(state, team, p.x, p.y)
    bx, by = _ego(state, team, state.ball.x, state.ball.y)
    owner = state.ball.owner
    opponents = [_ego(state, team, q.x, q.y) for q in state.players[1 - team]]

    if owner == (team, index):
        goal_x, goal_y = cfg.width, min(max(py, cfg.mouth[0]), cfg.mouth[1])
        if goal_x - px <= SHOT_DISTANCE and abs(goal_y - py) <= SHOT_DISTANCE:
            return SHOT
        pressed = any(cheb(px, py, ox, oy) <= 1 for ox, oy in opponents)
        if pressed:
            if _open_teammate(state, team, index, px, py, opponents) is not None:
                return SHORT_PASS
        return move_toward(goal_x - px, cfg.height // 2 - py)

    chaser = min(
        (q for q in state.players[team] if q.index in cfg.controlled),
        key=lambda q: (cheb(q.x, q.y, state.ball.x, state.ball.y), q.index),
    )
    if chaser.index == index:
        if owner is not None and owner[0] != team and cheb(px, py, bx, by) <= cfg.ball_reach:
            return SLIDE
        return move_toward(bx - px, by - py)
    # support: stay level with the ball, offset vertically from it
    tx = min(max(bx - 2, 1), cfg.width - 2)
    ty = cfg.height // 4 if by > cfg.height // 2 else 3 * cfg.height // 4
    return move_toward(tx - px, ty - py)


def _open_teammate(state: MatchState, team: int, index: int, px: int, py: int,
                   opponents: list[tuple[int, int]]):
    """Closest unmarked teammate inside the passer's facing cone and short-pass range."""
    cfg = state.config
    p = state.players[team][index]
    fx, fy = DIRECTIONS[p.facing if team == 0 else MIRROR_DIR[p.facing]]
    best = None
    for q in state.players[team]:
        if q.index == index:
            continue
        qx, qy = _ego(state, team, q.x, q.y)
        dx, dy = qx - px, qy - py
        d = math.hypot(dx, dy)
        if d == 0 or d > cfg.short_pass_range or (dx * fx + dy * fy) < 0.5 * d * math.hypot(fx, fy):
            continue
        if any(cheb(qx, qy, ox, oy) <= 1 for ox, oy in opponents):
            continue
        key = (d, q.index)
        if best is None or key < best[0]:
            best = (key, (qx, qy))
    return None if best is None else best[1]


def scripted_team_actions(state: MatchState, team: int) -> list[int]:
    return [scripted_action(state, team, i) for i in state.config.controlled]
