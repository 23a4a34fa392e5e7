"""Match state types, environment config and the kickoff layout.

World frame: x runs 0..width-1 left to right, y runs 0..height-1 top to
bottom.  Team 0 (home) defends x = 0 and attacks towards x = width - 1; team 1
(away) is the mirror image.  Within a team, outfielders use indices
0..team_size-1 and the keeper is the last index.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union

from .actions import n_actions

GAME_MODES = ("open_play", "kickoff", "corner", "free_kick", "penalty_box_attack")

# Kickoff formation offsets from the centre spot, home frame (attacking +x).
# Index 0 takes the kickoff; the non-kicking side's index 0 drops back.
FORMATIONS = {
    1: [(-1, 0)],
    2: [(-1, 0), (-6, -3)],
    3: [(-1, 0), (-6, -4), (-6, 4)],
    4: [(-1, 0), (-5, -4), (-5, 4), (-9, 0)],
    5: [(-1, 0), (-4, -5), (-4, 5), (-8, -2), (-8, 2)],
}
NON_KICKER_DROP = 2


@dataclass(frozen=True)
class EnvConfig:
    width: int = 24
    height: int = 16
    team_size: int = 2  # outfielders per team; each team also has a keeper
    steps_total: int = 400
    sticky_actions: bool = False
    learned_keeper: bool = False
    ball_reach: int = 1  # "far from the ball" threshold, in cells (Chebyshev)
    goal_mouth: int = 4
    short_pass_range: int = 7
    long_pass_range: int = 14
    long_pass_min: int = 5
    secondary_attack_window: int = 16
    tackle_same_cell: float = 0.5
    tackle_adjacent: float = 0.15
    slide_success: float = 0.6
    outfield_block: float = 0.7

    def __post_init__(self):
        if self.team_size not in FORMATIONS:
            raise ValueError(f"team_size must be in {sorted(FORMATIONS)}")
        if self.width < 12 or self.height < 8:
            raise ValueError("field must be at least 12x8")
        if self.goal_mouth < 1 or self.goal_mouth > self.height:
            raise ValueError("goal_mouth out of range")

    @property
    def players_per_team(self) -> int:
        return self.team_size + 1

    @property
    def keeper_index(self) -> int:
        return self.team_size

    @property
    def n_actions(self) -> int:
        return n_actions(self.sticky_actions)

    @property
    def controlled(self) -> list[int]:
        """Player indices driven by a policy (keepers are scripted unless learned)."""
        n = self.players_per_team if self.learned_keeper else self.team_size
        return list(range(n))

    @property
    def centre(self) -> tuple[int, int]:
        return self.width // 2, self.height // 2

    @property
    def mouth(self) -> tuple[int, int]:
        cy = self.height // 2
        lo = cy - self.goal_mouth // 2
        return lo, lo + self.goal_mouth - 1

    def keeper_cell(self, team: int) -> tuple[int, int]:
        return (0 if team == 0 else self.width - 1), self.height // 2

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PlayerState:
    x: int
    y: int
    team: int
    index: int
    is_keeper: bool = False
    facing: int = 4  # direction index, world frame
    sprinting: bool = False
    dribbling: bool = False


@dataclass
class BallState:
    x: int
    y: int
    owner: Optional[tuple[int, int]] = None  # (team, index) or None when free


def new_counters() -> dict:
    return {
        "goals": 0, "shots": 0, "shots_in_box": 0, "short_passes": 0, "long_passes": 0,
        "slides": 0, "possession_steps": 0, "ball_recoveries": 0, "out_of_bounds": 0,
    }


@dataclass
class MatchState:
    config: EnvConfig
    players: list[list[PlayerState]]
    ball: BallState
    score: list[int] = field(default_factory=lambda: [0, 0])
    steps_elapsed: int = 0
    steps_total: int = 400
    game_mode: str = "kickoff"
    scenario_active: bool = False
    scenario_name: Optional[str] = None
    scenario_offense: Optional[int] = None
    possession_team: Optional[int] = None
    last_pass: Optional[tuple[int, int, int, int]] = None  # team, passer, receiver, step
    done: bool = False
    counters: list[dict] = field(default_factory=lambda: [new_counters(), new_counters()])
    illegal_actions: int = 0
    rng: random.Random = field(default_factory=random.Random, compare=False, repr=False)

    def player(self, team: int, index: int) -> PlayerState:
        return self.players[team][index]

    def owner(self) -> Optional[PlayerState]:
        if self.ball.owner is None:
            return None
        t, i = self.ball.owner
        return self.players[t][i]

    def positions(self) -> list[tuple[int, int, int, int]]:
        return [(p.team, p.index, p.x, p.y) for team in self.players for p in team]


def make_rng(rng: Union[int, random.Random, None]) -> random.Random:
    if isinstance(rng, random.Random):
        return rng
    return random.Random(rng)


def _clamp(v: int, lo: int, hi: int) -> int:
    return lo if v < lo else hi if v > hi else v


def place_kickoff(state: MatchState, kickoff_team: int) -> None:
    """Put every player on the formation cells and give the ball to the kicker."""
    cfg = state.config
    cx, cy = cfg.centre
    offsets = FORMATIONS[cfg.team_size]
    for team in (0, 1):
        for i, (ox, oy) in enumerate(offsets):
            if i == 0 and team != kickoff_team:
                ox -= NON_KICKER_DROP
            x = _clamp(cx + ox, 0, cfg.width - 1)
            y = _clamp(cy + oy, 0, cfg.height - 1)
            if team == 1:
                x = cfg.width - 1 - x
            p = state.players[team][i]
            p.x, p.y = x, y
            p.facing = 4 if team == 0 else 0
            p.sprinting = p.dribbling = False
        k = state.players[team][cfg.keeper_index]
        k.x, k.y = cfg.keeper_cell(team)
        k.facing = 4 if team == 0 else 0
        k.sprinting = k.dribbling = False
    kicker = state.players[kickoff_team][0]
    state.ball = BallState(kicker.x, kicker.y, (kickoff_team, 0))
    state.possession_team = kickoff_team
    state.game_mode = "kickoff"
    state.last_pass = None


def empty_state(config: EnvConfig, rng: random.Random, steps_total: int) -> MatchState:
    players = [
        [PlayerState(0, 0, team, i, is_keeper=(i == config.keeper_index))
         for i in range(config.players_per_team)]
        for team in (0, 1)
    ]
    return MatchState(config=config, players=players, ball=BallState(0, 0), steps_total=steps_total,
                      rng=rng)


def reset_match(config: EnvConfig, rng: Union[int, random.Random, None] = None,
                kickoff_team: int = 0) -> MatchState:
    """Kickoff layout, 0-0, no steps elapsed."""
    state = empty_state(config, make_rng(rng), config.steps_total)
    place_kickoff(state, kickoff_team)
    return state
