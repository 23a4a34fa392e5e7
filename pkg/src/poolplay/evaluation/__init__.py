from .arena import (
    BEHAVIORS, EvaluationError, Game, LatentSkillRunner, MatchOutcome, PolicyRunner, RoundRobinResult, Runner,
    behaviors_from_counters, read_outcomes, round_robin, schedule_round_robin, write_outcomes,
)
from .behavior import (
    ReportRow, behavior_stats, judgment_report, mean_behaviors, player_heatmap, position_heatmap,
    write_matrix_csv, write_report,
)
from .elo import INITIAL_RATING, K_FACTOR, EloTable, expected_score
from .screening import (
    GAMES_PER_PAIR, SCREEN_WINDOW, TOP_K, ScreenResult, TopModelPool, merge_and_prune, rank_candidates,
    screen_top3,
)

__all__ = [
    "BEHAVIORS", "EvaluationError", "Game", "LatentSkillRunner", "MatchOutcome", "PolicyRunner", "RoundRobinResult", "Runner",
    "behaviors_from_counters", "read_outcomes", "round_robin", "schedule_round_robin", "write_outcomes",
    "ReportRow", "behavior_stats", "judgment_report", "mean_behaviors", "player_heatmap", "position_heatmap",
    "write_matrix_csv", "write_report", "INITIAL_RATING", "K_FACTOR", "EloTable", "expected_score",
    "GAMES_PER_PAIR", "SCREEN_WINDOW", "TOP_K", "ScreenResult", "TopModelPool", "merge_and_prune",
    "rank_candidates", "screen_top3",
]
