"""Discrete action set.

Indices follow the GRF default set with the entries that have no grid analog
removed (high pass, release direction).  Sticky actions append four entries.

    0 idle | 1-8 moves (left, top_left, top, top_right, right, bottom_right,
    bottom, bottom_left) | 9 long_pass | 10 short_pass | 11 shot | 12 slide |
    13 sprint | 14 release_sprint | 15 dribble | 16 release_dribble
"""

from __future__ import annotations

IDLE = 0
MOVE_FIRST, MOVE_LAST = 1, 8
LONG_PASS = 9
SHORT_PASS = 10
SHOT = 11
SLIDE = 12
SPRINT = 13
RELEASE_SPRINT = 14
DRIBBLE = 15
RELEASE_DRIBBLE = 16

BASE_ACTIONS = 13
STICKY_ACTIONS = 17

ACTION_NAMES = [
    "idle", "left", "top_left", "top", "top_right", "right", "bottom_right", "bottom",
    "bottom_left", "long_pass", "short_pass", "shot", "slide",
    "sprint", "release_sprint", "dribble", "release_dribble",
]

# facing / move direction index 0..7 -> (dx, dy); y grows downwards ("bottom")
DIRECTIONS = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]
# reflection x -> W-1-x maps direction d to MIRROR_DIR[d]
MIRROR_DIR = [4, 3, 2, 1, 0, 7, 6, 5]

KICKS = (LONG_PASS, SHORT_PASS, SHOT)


def n_actions(sticky: bool) -> int:
    return STICKY_ACTIONS if sticky else BASE_ACTIONS


def is_move(a: int) -> bool:
    return MOVE_FIRST <= a <= MOVE_LAST


def mirror_action(a: int) -> int:
    if is_move(a):
        return MOVE_FIRST + MIRROR_DIR[a - MOVE_FIRST]
    return a


def move_toward(dx: int, dy: int) -> int:
    """Move action heading along the sign of (dx, dy); idle when both are 0."""
    sx = (dx > 0) - (dx < 0)
    sy = (dy > 0) - (dy < 0)
    if sx == 0 and sy == 0:
        return IDLE
    return MOVE_FIRST + DIRECTIONS.index((sx, sy))
