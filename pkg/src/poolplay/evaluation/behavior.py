"""Behaviour distributions, position heatmaps and the ranked judgment report."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .arena import BEHAVIORS, MatchOutcome
from .elo import EloTable


def mean_behaviors(outcomes: Sequence[MatchOutcome], player: str) -> dict[str, float]:
    """Per-game mean of each behaviour counter from ``player``'s side."""
    rows = [o.behaviors[o.side_of(player)] for o in outcomes if player in (o.home, o.away)]
    if not rows:
        raise ValueError(f"no outcomes for {player!r}")
    return {b: float(np.mean([r.get(b, 0) for r in rows])) for b in BEHAVIORS}


def behavior_stats(outcomes: Mapping[str, Sequence[MatchOutcome]]) -> dict[str, dict[str, float]]:
    """Per-checkpoint behaviour means, each behaviour divided by its max across checkpoints."""
    means = {p: mean_behaviors(outs, p) for p, outs in outcomes.items()}
    out = {p: {} for p in means}
    for b in BEHAVIORS:
        top = max((m[b] for m in means.values()), default=0.0)
        for p, m in means.items():
            out[p][b] = m[b] / top if top > 0 else 0.0
    return out


def position_heatmap(grids: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of occupancy grids scaled so the hottest cell is 1."""
    total = np.sum(np.asarray(grids, dtype=np.float64), axis=0)
    peak = total.max()
    return total / peak if peak > 0 else total


def player_heatmap(outcomes: Sequence[MatchOutcome], player: str) -> np.ndarray:
    return position_heatmap([o.occupancy[o.side_of(player)] for o in outcomes
                             if o.occupancy is not None and player in (o.home, o.away)])


def write_matrix_csv(path: os.PathLike, matrix: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, matrix, delimiter=",", fmt="%.6g")


@dataclass
class ReportRow:
    checkpoint: str
    elo: float
    games: int
    wins: int
    draws: int
    losses: int
    goals_per_game: float
    conceded_per_game: float
    possession_share: float
    behaviors: dict[str, float]
    heatmap: Optional[str] = None

    @property
    def win_rate(self) -> float:
        return self.wins / self.games if self.games else 0.0


def judgment_report(candidates: Sequence[str], elo: EloTable, outcomes: Sequence[MatchOutcome],
                    heatmap_paths: Optional[Mapping[str, str]] = None) -> list[ReportRow]:
    """Ranked table for a human to pick the final model from; ranking is by Elo only."""
    by_player = {p: [o for o in outcomes if p in (o.home, o.away)] for p in candidates}
    played = {p: v for p, v in by_player.items() if v}
    norm = behavior_stats(played) if played else {}
    rows = []
    for p in candidates:
        mine = by_player[p]
        wins = sum(o.winner == p for o in mine)
        draws = sum(o.winner is None for o in mine)
        gf = [o.goals[o.side_of(p)] for o in mine]
        ga = [o.goals[1 - o.side_of(p)] for o in mine]
        own = sum(o.behaviors[o.side_of(p)].get("possession_steps_self", 0) for o in mine)
        opp = sum(o.behaviors[o.side_of(p)].get("possession_steps_opponent", 0) for o in mine)
        rows.append(ReportRow(
            p, elo.rating(p), len(mine), wins, draws, len(mine) - wins - draws,
            float(np.mean(gf)) if mine else 0.0, float(np.mean(ga)) if mine else 0.0,
            own / (own + opp) if own + opp else 0.0, norm.get(p, {b: 0.0 for b in BEHAVIORS}),
            (heatmap_paths or {}).get(p)))
    rows.sort(key=lambda r: -r.elo)
    return rows


REPORT_FIELDS = ("rank", "checkpoint", "elo", "games", "wins", "draws", "losses", "win_rate",
                 "goals_per_game", "conceded_per_game", "possession_share", "heatmap")


def write_report(rows: Sequence[ReportRow], directory: os.PathLike) -> tuple[Path, Path]:
    """``report.csv`` plus a plain-text ranked summary ``report.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "report.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(REPORT_FIELDS + BEHAVIORS)
        for i, r in enumerate(rows, 1):
            wr.writerow([i, r.checkpoint, f"{r.elo:.1f}", r.games, r.wins, r.draws, r.losses,
                         f"{r.win_rate:.3f}", f"{r.goals_per_game:.3f}", f"{r.conceded_per_game:.3f}",
                         f"{r.possession_share:.3f}", r.heatmap or ""]
                        + [f"{r.behaviors[b]:.3f}" for b in BEHAVIORS])
    lines = [f"{'#':>2}  {'checkpoint':<24} {'elo':>7} {'W-D-L':>10} {'gf/g':>5} {'ga/g':>5} {'poss':>5}"]
    for i, r in enumerate(rows, 1):
        lines.append(f"{i:>2}  {r.checkpoint:<24} {r.elo:7.1f} {f'{r.wins}-{r.draws}-{r.losses}':>10} "
                     f"{r.goals_per_game:5.2f} {r.conceded_per_game:5.2f} {r.possession_share:5.2f}")
    (d / "report.txt").write_text("\n".join(lines) + "\n")
    return d / "report.csv", d / "report.txt"
