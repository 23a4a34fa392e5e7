"""Randomised key-situation starts (kickoff, corner, free kick, box attack, solo).

Regions are inclusive cell rectangles written in the attacking side's frame
(attacking towards +x).  The side that attacks is drawn uniformly per reset;
for the away team the regions are reflected.  The attacking carrier (offence
player 0) spawns on the ball cell and owns the ball.  Keepers stand on their
goal cells and every other player is placed uniformly over the field.

A scenario episode ends on a goal, on the ball leaving the field, when the
defence wins the ball, or after ``max_steps``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .state import GAME_MODES, BallState, EnvConfig, MatchState, empty_state, make_rng

MAX_SCENARIO_STEPS = 512

Rect = tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive


class ScenarioError(ValueError):
    pass


def rect_cells(r: Rect) -> list[tuple[int, int]]:
    x0, y0, x1, y1 = r
    return [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]


def in_rect(r: Rect, x: int, y: int) -> bool:
    return r[0] <= x <= r[2] and r[1] <= y <= r[3]


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    ball_region: Rect
    offense_regions: tuple[Rect, ...] = ()  # offence players 1.. (player 0 carries the ball)
    defense_regions: tuple[Rect, ...] = ()  # defence players 0..
    max_steps: int = 256
    game_mode: str = "open_play"

    def validate(self, config: EnvConfig) -> None:
        if not 0 < self.max_steps <= MAX_SCENARIO_STEPS:
            raise ScenarioError(f"{self.name}: max_steps must be in 1..{MAX_SCENARIO_STEPS}")
        if self.game_mode not in GAME_MODES:
            raise ScenarioError(f"{self.name}: unknown game_mode {self.game_mode!r}")
        if len(self.offense_regions) > config.team_size - 1:
            raise ScenarioError(f"{self.name}: more offence regions than outfielders")
        if len(self.defense_regions) > config.team_size:
            raise ScenarioError(f"{self.name}: more defence regions than outfielders")
        goal = (config.width - 1, config.height // 2)  # defending keeper, attacker's frame
        for label, r in [("ball", self.ball_region)] + [("offense", r) for r in self.offense_regions] \
                + [("defense", r) for r in self.defense_regions]:
            x0, y0, x1, y1 = r
            if x0 > x1 or y0 > y1:
                raise ScenarioError(f"{self.name}: empty {label} region {r}")
            if x0 < 0 or y0 < 0 or x1 >= config.width or y1 >= config.height:
                raise ScenarioError(f"{self.name}: {label} region {r} leaves the field")
            if label != "defense" and in_rect(r, *goal):
                raise ScenarioError(f"{self.name}: {label} region covers the defending goal cell")

    def to_dict(self) -> dict:
        return {
            "name": self.name, "ball_region": list(self.ball_region),
            "offense_regions": [list(r) for r in self.offense_regions],
            "defense_regions": [list(r) for r in self.defense_regions],
            "max_steps": self.max_steps, "game_mode": self.game_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            name=d["name"], ball_region=tuple(d["ball_region"]),
            offense_regions=tuple(tuple(r) for r in d.get("offense_regions", ())),
            defense_regions=tuple(tuple(r) for r in d.get("defense_regions", ())),
            max_steps=int(d.get("max_steps", 256)), game_mode=d.get("game_mode", "open_play"),
        )


def _box(config: EnvConfig, fx0: float, fy0: float, fx1: float, fy1: float) -> Rect:
    """Rectangle from field fractions, clamped inside the field."""
    W, H = config.width - 1, config.height - 1
    x0, x1 = round(fx0 * W), round(fx1 * W)
    y0, y1 = round(fy0 * H), round(fy1 * H)
    return (max(0, x0), max(0, y0), min(W, max(x0, x1)), min(H, max(y0, y1)))


def default_scenarios(config: EnvConfig) -> dict[str, ScenarioSpec]:
    """The five shipped scenarios, scaled to the field size."""
    n_off = config.team_size - 1
    b = lambda *f: _box(config, *f)  # noqa: E731
    # keep attacking regions clear of the keeper column
    goal_edge = (config.width - 3) / (config.width - 1)
    specs = [
        ScenarioSpec("kickoff", b(0.48, 0.47, 0.5, 0.53), (b(0.3, 0.2, 0.45, 0.8),) * n_off,
                     (b(0.55, 0.3, 0.7, 0.7),) * config.team_size, 256, "kickoff"),
        ScenarioSpec("corner", b(goal_edge, 0.0, goal_edge, 0.05),
                     (b(0.75, 0.3, 0.9, 0.7),) * n_off,
                     (b(0.8, 0.25, goal_edge, 0.75),) * config.team_size, 128, "corner"),
        ScenarioSpec("free_kick", b(0.6, 0.2, 0.72, 0.8), (b(0.72, 0.25, 0.88, 0.75),) * n_off,
                     (b(0.75, 0.3, goal_edge, 0.7),) * config.team_size, 128, "free_kick"),
        ScenarioSpec("penalty_box_attack", b(0.76, 0.25, 0.88, 0.75), (b(0.72, 0.2, 0.9, 0.8),) * n_off,
                     (b(0.8, 0.25, goal_edge, 0.75),) * config.team_size, 128, "penalty_box_attack"),
        ScenarioSpec("solo", b(0.5, 0.25, 0.65, 0.75), (), (b(0.68, 0.3, 0.82, 0.7),), 128, "open_play"),
    ]
    return {s.name: s for s in specs}


def reset_scenario(spec: ScenarioSpec, config: EnvConfig,
                   rng: Union[int, random.Random, None] = None,
                   offense: Optional[int] = None) -> MatchState:
    """Sample a scenario start; ``offense`` forces the attacking team."""
    spec.validate(config)
    rng = make_rng(rng)
    state = empty_state(config, rng, spec.max_steps)
    off = rng.randrange(2) if offense is None else offense
    W = config.width

    def world(team: int, x: int, y: int) -> tuple[int, int]:
        return (x, y) if team == 0 else (W - 1 - x, y)

    def draw(r: Rect) -> tuple[int, int]:
        x0, y0, x1, y1 = r
        return rng.randint(x0, x1), rng.randint(y0, y1)

    def uniform() -> tuple[int, int]:
        return rng.randrange(config.width), rng.randrange(config.height)

    bx, by = draw(spec.ball_region)
    for team in (0, 1):
        for p in state.players[team]:
            p.facing = 4 if team == 0 else 0
            p.sprinting = p.dribbling = False
            if p.is_keeper:
                p.x, p.y = config.keeper_cell(team)
                continue
            if team == off:
                if p.index == 0:
                    ex, ey = bx, by
                elif p.index - 1 < len(spec.offense_regions):
                    ex, ey = draw(spec.offense_regions[p.index - 1])
                else:
                    ex, ey = uniform()
            else:
                if p.index < len(spec.defense_regions):
                    ex, ey = draw(spec.defense_regions[p.index])
                else:
                    ex, ey = uniform()
            # regions are in the attacker's frame; reflect when the away team attacks
            p.x, p.y = world(off, ex, ey)
    cx, cy = world(off, bx, by)
    state.ball = BallState(cx, cy, (off, 0))
    state.possession_team = off
    state.game_mode = spec.game_mode
    state.scenario_active = True
    state.scenario_name = spec.name
    state.scenario_offense = off
    return state


def pick_scenario(specs: Sequence[ScenarioSpec], rng: random.Random) -> ScenarioSpec:
    return specs[rng.randrange(len(specs))]
