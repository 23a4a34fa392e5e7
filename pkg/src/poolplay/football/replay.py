"""Line-delimited episode replays: one JSON object per step."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable, Sequence, Union

from .dynamics import Event
from .state import MatchState


def step_record(state: MatchState, actions: Sequence[Sequence[int]], events: Iterable[Event]) -> dict:
    """Snapshot taken after ``step``; ``actions`` are in each team's own frame."""
    return {
        "step": state.steps_elapsed,
        "positions": [[p.team, p.index, p.x, p.y] for team in state.players for p in team],
        "ball": [state.ball.x, state.ball.y, None if state.ball.owner is None else list(state.ball.owner)],
        "actions": [[int(a) for a in team] for team in actions],
        "events": [[e.kind, e.team, e.player, e.other] for e in events],
        "score": list(state.score),
    }


def initial_record(state: MatchState) -> dict:
    return step_record(state, [[], []], [])


def write_replay(path: Union[str, Path], records: Iterable[dict]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")
    os.replace(tmp, path)


def read_replay(path: Union[str, Path]) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
