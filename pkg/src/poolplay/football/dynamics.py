"""Transition rules.

One call to :func:`step` resolves, in order: sticky toggles, the kick (at most
one per step), slides, movement, free-ball pickup and passive tackles.  Every
random draw comes from ``state.rng`` so an episode is reproducible from its
seed and the policies' actions.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence

from .actions import (
    DIRECTIONS, DRIBBLE, IDLE, KICKS, LONG_PASS, RELEASE_DRIBBLE, RELEASE_SPRINT, SHORT_PASS,
    SHOT, SLIDE, SPRINT, is_move, mirror_action, move_toward,
)
from .state import MatchState, PlayerState, place_kickoff

SHORT_PASS_FREE_DISTANCE = 5
LONG_PASS_FREE_DISTANCE = 10
BOX_DEPTH = 6
BOX_HALF_WIDTH = 4


class Event(NamedTuple):
    kind: str  # goal | possession | out_of_bounds | slide_success | secondary_attack | hold_ball | result | illegal
    team: int
    player: int = -1
    other: int = -1  # possession: losing player; result: away score; illegal: action


def cheb(ax: int, ay: int, bx: int, by: int) -> int:
    return max(abs(ax - bx), abs(ay - by))


def line_cells(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Bresenham line, both endpoints included."""
    cells = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        cells.append((x, y))
        if x == x1 and y == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def in_field(state: MatchState, x: int, y: int) -> bool:
    cfg = state.config
    return 0 <= x < cfg.width and 0 <= y < cfg.height


def in_attacking_box(state: MatchState, team: int, x: int, y: int) -> bool:
    cfg = state.config
    ex = x if team == 0 else cfg.width - 1 - x
    return ex >= cfg.width - BOX_DEPTH and abs(y - cfg.height // 2) <= BOX_HALF_WIDTH


def in_own_half(state: MatchState, team: int, x: int) -> bool:
    ex = x if team == 0 else state.config.width - 1 - x
    return ex < state.config.width // 2


def ball_within_reach(state: MatchState, p: PlayerState) -> bool:
    """True when ``p`` can play the ball: it owns it, or it is free within reach."""
    owner = state.ball.owner
    if owner is not None:
        return owner == (p.team, p.index)
    return cheb(p.x, p.y, state.ball.x, state.ball.y) <= state.config.ball_reach


def action_is_legal(state: MatchState, p: PlayerState, a: int) -> bool:
    """Physical feasibility; anything else is degraded to idle by :func:`step`."""
    if a in KICKS:
        return ball_within_reach(state, p)
    if a == SPRINT:
        return not p.sprinting
    if a == RELEASE_SPRINT:
        return p.sprinting
    if a == DRIBBLE:
        return not p.dribbling
    if a == RELEASE_DRIBBLE:
        return p.dribbling
    return 0 <= a < state.config.n_actions


def keeper_action(state: MatchState, team: int) -> int:
    """Scripted keeper (world frame): hold the line, collect loose balls, clear long."""
    cfg = state.config
    k = state.players[team][cfg.keeper_index]
    ball = state.ball
    if ball.owner == (team, k.index):
        k.facing = 4 if team == 0 else 0
        return LONG_PASS
    if ball.owner is None and cheb(k.x, k.y, ball.x, ball.y) <= 1:
        return move_toward(ball.x - k.x, ball.y - k.y)
    hx, _ = cfg.keeper_cell(team)
    lo, hi = cfg.mouth
    ty = min(max(ball.y, lo), hi)
    return move_toward(hx - k.x, ty - k.y)


def _gain(state: MatchState, team: int, index: int, events: list) -> None:
    prev = state.possession_team
    loser = state.ball.owner
    p = state.players[team][index]
    state.ball.owner = (team, index)
    state.ball.x, state.ball.y = p.x, p.y
    if prev is not None and prev != team:
        events.append(Event("possession", team, index, -1 if loser is None else loser[1]))
        state.counters[team]["ball_recoveries"] += 1
    state.possession_team = team


def _goal(state: MatchState, team: int, scorer: int, events: list) -> None:
    state.score[team] += 1
    state.counters[team]["goals"] += 1
    events.append(Event("goal", team, scorer))
    lp = state.last_pass
    if (lp is not None and lp[0] == team and lp[2] == scorer
            and state.steps_elapsed - lp[3] <= state.config.secondary_attack_window):
        events.append(Event("secondary_attack", team, lp[1]))
    if state.scenario_active:
        state.done = True
        state.ball.owner = None
    else:
        place_kickoff(state, 1 - team)


def _first_opponent_on(state: MatchState, team: int, cells: Sequence[tuple[int, int]]) -> Optional[PlayerState]:
    if not cells:
        return None
    order = {c: k for k, c in enumerate(cells)}
    best, best_k = None, None
    for q in state.players[1 - team]:
        k = order.get((q.x, q.y))
        if k is not None and (best_k is None or k < best_k or (k == best_k and q.index < best.index)):
            best, best_k = q, k
    return best


def _shot(state: MatchState, p: PlayerState, events: list) -> None:
    cfg = state.config
    rng = state.rng
    team = p.team
    c = state.counters[team]
    c["shots"] += 1
    if in_attacking_box(state, team, p.x, p.y):
        c["shots_in_box"] += 1
    goal_x = cfg.width if team == 0 else -1
    lo, hi = cfg.mouth
    best = None
    for ty in range(lo, hi + 1):
        lane = [cell for cell in line_cells(p.x, p.y, goal_x, ty)[1:] if in_field(state, *cell)]
        blocker = _first_opponent_on(state, team, lane)
        rank = 0 if blocker is None else (1 if blocker.is_keeper else 2)
        dist = math.hypot(goal_x - p.x, ty - p.y)
        key = (rank, dist, ty)
        if best is None or key < best[0]:
            best = (key, blocker, dist)
    _, blocker, dist = best
    on_target = min(max(1.2 - 0.1 * dist, 0.0), 1.0)
    if rng.random() >= on_target:
        events.append(Event("out_of_bounds", team, p.index))
        c["out_of_bounds"] += 1
        _gain(state, 1 - team, cfg.keeper_index, events)
        if state.scenario_active:
            state.done = True
        return
    if blocker is not None:
        save = min(max(0.2 + 0.06 * dist, 0.0), 0.9) if blocker.is_keeper else cfg.outfield_block
        if rng.random() < save:
            _gain(state, blocker.team, blocker.index, events)
            return
    _goal(state, team, p.index, events)


def _pass(state: MatchState, p: PlayerState, long: bool, events: list) -> None:
    cfg = state.config
    team = p.team
    state.counters[team]["long_passes" if long else "short_passes"] += 1
    fx, fy = DIRECTIONS[p.facing]
    fnorm = math.hypot(fx, fy)
    lo = cfg.long_pass_min if long else 1
    hi = cfg.long_pass_range if long else cfg.short_pass_range
    best = None
    for q in state.players[team]:
        if q.index == p.index:
            continue
        dx, dy = q.x - p.x, q.y - p.y
        d = math.hypot(dx, dy)
        if d == 0 or not lo <= d <= hi:
            continue
        cos = (dx * fx + dy * fy) / (d * fnorm)
        if cos < 0.5:
            continue
        key = (-cos, d, q.index)
        if best is None or key < best[0]:
            best = (key, q)
    if best is not None:
        q = best[1]
        lane = line_cells(p.x, p.y, q.x, q.y)[1:-1]
        contest = lane[-2:] if long else lane
        opp = _first_opponent_on(state, team, contest)
        if opp is not None:
            _gain(state, opp.team, opp.index, events)
        else:
            _gain(state, team, q.index, events)
            state.last_pass = (team, p.index, q.index, state.steps_elapsed)
        return
    dist = LONG_PASS_FREE_DISTANCE if long else SHORT_PASS_FREE_DISTANCE
    tx, ty = p.x + fx * dist, p.y + fy * dist
    path = [cell for cell in line_cells(p.x, p.y, tx, ty)[1:] if in_field(state, *cell)]
    contest = path[-2:] if long else path
    opp = _first_opponent_on(state, team, contest)
    if opp is not None:
        _gain(state, opp.team, opp.index, events)
        return
    if not in_field(state, tx, ty):
        events.append(Event("out_of_bounds", team, p.index))
        state.counters[team]["out_of_bounds"] += 1
        ex, ey = path[-1] if path else (p.x, p.y)
        taker = min(state.players[1 - team], key=lambda q: (cheb(q.x, q.y, ex, ey), q.index))
        _gain(state, taker.team, taker.index, events)
        if state.scenario_active:
            state.done = True
        return
    state.ball.owner = None
    state.ball.x, state.ball.y = tx, ty


def _world_actions(state: MatchState, actions: Sequence[Sequence[int]]) -> list[list[int]]:
    cfg = state.config
    ctrl = cfg.controlled
    world = [[IDLE] * cfg.players_per_team for _ in (0, 1)]
    for team in (0, 1):
        acts = actions[team]
        if len(acts) != len(ctrl):
            raise ValueError(f"team {team}: expected {len(ctrl)} actions, got {len(acts)}")
        for k, idx in enumerate(ctrl):
            a = int(acts[k])
            world[team][idx] = mirror_action(a) if team == 1 else a
        if not cfg.learned_keeper:
            world[team][cfg.keeper_index] = keeper_action(state, team)
    return world


def step(state: MatchState, actions: Sequence[Sequence[int]]) -> tuple[MatchState, list[Event], bool]:
    """Advance one step; mutates and returns ``state``.

    ``actions[team]`` lists one action per controlled player, expressed in that
    team's own frame (always attacking towards +x).
    """
    if state.done:
        raise RuntimeError("step() called on a finished match")
    cfg = state.config
    rng = state.rng
    events: list[Event] = []
    world = _world_actions(state, actions)
    everyone = [p for team in state.players for p in team]

    for p in everyone:
        a = world[p.team][p.index]
        if not action_is_legal(state, p, a):
            events.append(Event("illegal", p.team, p.index, a))
            state.illegal_actions += 1
            world[p.team][p.index] = IDLE
        elif a == SPRINT:
            p.sprinting = True
        elif a == RELEASE_SPRINT:
            p.sprinting = False
        elif a == DRIBBLE:
            p.dribbling = True
        elif a == RELEASE_DRIBBLE:
            p.dribbling = False

    # kick: the owner acts first; otherwise the closest player kicking a loose ball
    kicker = None
    owner = state.ball.owner
    if owner is not None:
        if world[owner[0]][owner[1]] in KICKS:
            kicker = state.players[owner[0]][owner[1]]
    else:
        cands = [p for p in everyone if world[p.team][p.index] in KICKS]
        if cands:
            bx, by = state.ball.x, state.ball.y
            dmin = min(cheb(p.x, p.y, bx, by) for p in cands)
            nearest = [p for p in cands if cheb(p.x, p.y, bx, by) == dmin]
            kicker = nearest[0] if len(nearest) == 1 else rng.choice(nearest)
            _gain(state, kicker.team, kicker.index, events)
    goal_before = state.score[0] + state.score[1]
    if kicker is not None:
        a = world[kicker.team][kicker.index]
        if a == SHOT:
            _shot(state, kicker, events)
        else:
            _pass(state, kicker, a == LONG_PASS, events)
    scored = state.score[0] + state.score[1] != goal_before

    if not scored and not state.done:
        sliders = [p for p in everyone if world[p.team][p.index] == SLIDE]
        if len(sliders) > 1:
            rng.shuffle(sliders)
        for p in sliders:
            state.counters[p.team]["slides"] += 1
            owner = state.ball.owner
            if owner is None or owner[0] == p.team:
                continue
            c = state.players[owner[0]][owner[1]]
            if cheb(p.x, p.y, c.x, c.y) <= cfg.ball_reach and rng.random() < cfg.slide_success:
                events.append(Event("slide_success", p.team, p.index))
                _gain(state, p.team, p.index, events)

        owner = state.ball.owner
        for p in everyone:
            a = world[p.team][p.index]
            if not is_move(a):
                continue
            d = a - 1
            dx, dy = DIRECTIONS[d]
            carrying = owner is not None and owner == (p.team, p.index)
            speed = 2 if p.sprinting and not (p.dribbling and carrying) else 1
            nx = min(max(p.x + dx * speed, 0), cfg.width - 1)
            ny = min(max(p.y + dy * speed, 0), cfg.height - 1)
            p.x, p.y, p.facing = nx, ny, d
            if carrying:
                state.ball.x, state.ball.y = nx, ny

        if state.ball.owner is None:
            bx, by = state.ball.x, state.ball.y
            on_ball = [p for p in everyone if p.x == bx and p.y == by]
            if on_ball:
                taker = on_ball[0] if len(on_ball) == 1 else rng.choice(on_ball)
                _gain(state, taker.team, taker.index, events)
        else:
            t, i = state.ball.owner
            c = state.players[t][i]
            for q in state.players[1 - t]:
                dist = cheb(q.x, q.y, c.x, c.y)
                if dist > 1:
                    continue
                prob = cfg.tackle_same_cell if dist == 0 else cfg.tackle_adjacent
                if c.dribbling:
                    prob *= 0.5
                if c.sprinting:
                    prob *= 1.5
                if rng.random() < prob:
                    _gain(state, q.team, q.index, events)
                    break

    owner = state.ball.owner
    if owner is not None and not state.done:
        events.append(Event("hold_ball", owner[0], owner[1]))
        state.counters[owner[0]]["possession_steps"] += 1
    if not scored:
        state.game_mode = "open_play"
    if (state.scenario_active and state.scenario_offense is not None
            and state.possession_team == 1 - state.scenario_offense):
        state.done = True  # a scenario ends once the defence wins the ball
    state.steps_elapsed += 1
    if state.steps_elapsed >= state.steps_total:
        state.done = True
    if state.done:
        events.append(Event("result", -1, state.score[0], state.score[1]))
    return state, events, state.done
