"""Two-team gridworld football."""

from .actions import ACTION_NAMES, n_actions
from .dynamics import Event, step
from .observation import (
    EncodedBatch, HistoryStack, ObservationEncoder, encode_global, encode_observation, encoder_for,
    legal_action_mask,
)
from .rewards import GOAL_CLIP, RewardConfig, compute_rewards, goal_difference, reward_terms
from .scenarios import ScenarioError, ScenarioSpec, default_scenarios, reset_scenario
from .scripted import scripted_action, scripted_team_actions
from .state import EnvConfig, MatchState, reset_match

__all__ = [
    "ACTION_NAMES", "n_actions", "Event", "step", "EncodedBatch", "HistoryStack", "ObservationEncoder",
    "encode_global", "encode_observation", "encoder_for", "legal_action_mask", "GOAL_CLIP", "RewardConfig",
    "compute_rewards", "goal_difference", "reward_terms", "ScenarioError", "ScenarioSpec",
    "default_scenarios", "reset_scenario", "scripted_action", "scripted_team_actions", "EnvConfig",
    "MatchState", "reset_match",
]
