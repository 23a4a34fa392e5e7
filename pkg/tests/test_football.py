from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poolplay.football import (
    EnvConfig, HistoryStack, RewardConfig, ScenarioError, ScenarioSpec, compute_rewards,
    default_scenarios, encode_global, encode_observation, encoder_for, goal_difference,
    legal_action_mask, reset_match, reset_scenario, scripted_action, step,
)
from poolplay.football.actions import (
    DRIBBLE, IDLE, LONG_PASS, MIRROR_DIR, RELEASE_DRIBBLE, RELEASE_SPRINT, SHORT_PASS, SHOT,
    SLIDE, SPRINT, mirror_action,
)
from poolplay.football.audit import run_audit
from poolplay.football.dynamics import Event, line_cells
from poolplay.football.replay import initial_record, read_replay, step_record, write_replay
from poolplay.football.scenarios import in_rect
from poolplay.football.state import BallState

LEFT, RIGHT, TOP = 1, 5, 3


def place(state, team, index, x, y, facing=None):
    p = state.players[team][index]
    p.x, p.y = x, y
    if facing is not None:
        p.facing = facing
    return p


def give_ball(state, team, index):
    p = state.players[team][index]
    state.ball = BallState(p.x, p.y, (team, index))
    state.possession_team = team


def free_ball(state, x, y):
    state.ball = BallState(x, y, None)


def park_everyone(state):
    """Move every player out of the way (bottom row, spread out)."""
    for t in (0, 1):
        for p in state.players[t]:
            p.x, p.y = 2 + 3 * p.index + 12 * t, state.config.height - 1


# ---------------------------------------------------------------- reset

def test_kickoff_layout_default():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    assert len(s.players[0]) == len(s.players[1]) == 3
    assert s.score == [0, 0] and s.steps_elapsed == 0 and s.game_mode == "kickoff"
    assert (s.players[0][2].x, s.players[0][2].y) == (0, 8)
    assert (s.players[1][2].x, s.players[1][2].y) == (23, 8)
    # the non-kicking formation is the x-mirror of the kicking one except index 0's drop-back
    assert (s.players[0][1].x, s.players[0][1].y) == (cfg.width - 1 - s.players[1][1].x, s.players[1][1].y)
    kicker = s.players[0][0]
    assert s.ball.owner == (0, 0) and (s.ball.x, s.ball.y) == (kicker.x, kicker.y)
    assert abs(s.ball.x - (cfg.width - 1) / 2) <= 1 and abs(s.ball.y - cfg.height / 2) <= 1
    assert all(p.x < cfg.width // 2 for p in s.players[0])
    assert all(p.x >= cfg.width // 2 for p in s.players[1])


def test_reset_same_seed_identical():
    cfg = EnvConfig()
    assert reset_match(cfg, 7) == reset_match(cfg, 7)


def test_team_size_three_follows_formation_table():
    cfg = EnvConfig(team_size=3)
    s = reset_match(cfg, 0)
    assert len(s.players[0]) == 4
    cx, cy = cfg.centre
    expected = [(cx - 1, cy), (cx - 6, cy - 4), (cx - 6, cy + 4)]
    assert [(p.x, p.y) for p in s.players[0][:3]] == expected
    assert s.players[0][3].is_keeper and not any(p.is_keeper for p in s.players[0][:3])


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        EnvConfig(team_size=9)
    with pytest.raises(ValueError):
        EnvConfig(width=4)


# ---------------------------------------------------------------- transitions

def test_unmarked_shot_next_to_goal_scores():
    cfg = EnvConfig()
    s = reset_match(cfg, 3)
    park_everyone(s)
    place(s, 0, 0, cfg.width - 2, cfg.height // 2, facing=4)
    place(s, 1, cfg.keeper_index, cfg.width - 1, 0)
    give_ball(s, 0, 0)
    s, events, _ = step(s, [[SHOT, IDLE], [IDLE, IDLE]])
    assert s.score == [1, 0]
    assert Event("goal", 0, 0) in events
    assert s.game_mode == "kickoff" and s.ball.owner == (1, 0)  # conceding side kicks off


def test_line_cells_endpoints_and_adjacency():
    cells = line_cells(2, 3, 9, 6)
    assert cells[0] == (2, 3) and cells[-1] == (9, 6)
    assert all(max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1 for a, b in zip(cells, cells[1:]))


def test_move_into_boundary_is_clamped():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    place(s, 0, 1, 0, 0)
    s, _, _ = step(s, [[IDLE, LEFT], [IDLE, IDLE]])
    assert (s.players[0][1].x, s.players[0][1].y) == (0, 0)
    s, _, _ = step(s, [[IDLE, TOP], [IDLE, IDLE]])
    assert (s.players[0][1].x, s.players[0][1].y) == (0, 0)


def test_pass_without_target_intercepted_on_lane():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    park_everyone(s)
    place(s, 0, 0, 5, 8, facing=4)
    place(s, 0, 1, 2, 8)  # behind the passer: not a target
    place(s, 1, 0, 7, 8)  # sits on the free-ball lane
    give_ball(s, 0, 0)
    s, events, _ = step(s, [[SHORT_PASS, IDLE], [IDLE, IDLE]])
    assert Event("possession", 1, 0, 0) in events
    assert s.ball.owner == (1, 0)


def test_completed_pass_then_goal_credits_secondary_attack():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    park_everyone(s)
    place(s, 0, 0, cfg.width - 6, 8, facing=4)
    place(s, 0, 1, cfg.width - 3, 8)
    place(s, 1, cfg.keeper_index, cfg.width - 1, 0)
    give_ball(s, 0, 0)
    s, _, _ = step(s, [[SHORT_PASS, IDLE], [IDLE, IDLE]])
    assert s.ball.owner == (0, 1)
    place(s, 1, cfg.keeper_index, cfg.width - 1, 0)
    s, events, _ = step(s, [[IDLE, SHOT], [IDLE, IDLE]])
    assert Event("goal", 0, 1) in events and Event("secondary_attack", 0, 0) in events


def test_illegal_action_degrades_to_idle_and_is_recorded():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    far = s.players[0][1]
    before = (far.x, far.y)
    s, events, _ = step(s, [[IDLE, SHOT], [IDLE, IDLE]])
    assert Event("illegal", 0, 1, SHOT) in events
    assert (far.x, far.y) == before and s.illegal_actions >= 1


def test_away_actions_are_in_own_frame():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    p = s.players[1][1]
    x0 = p.x
    s, _, _ = step(s, [[IDLE, IDLE], [IDLE, RIGHT]])  # "right" for away is towards x = 0
    assert p.x == x0 - 1
    assert mirror_action(RIGHT) == LEFT and mirror_action(SHOT) == SHOT


def test_match_ends_on_time_with_result_event():
    cfg = EnvConfig(steps_total=5)
    s = reset_match(cfg, 0)
    for k in range(5):
        s, events, done = step(s, [[IDLE, IDLE], [IDLE, IDLE]])
    assert done and any(e.kind == "result" for e in events)
    with pytest.raises(RuntimeError):
        step(s, [[IDLE, IDLE], [IDLE, IDLE]])


def test_seeded_episode_is_reproducible():
    def run():
        cfg = EnvConfig(steps_total=150)
        s = reset_match(cfg, 11)
        rng = random.Random(5)
        trace = []
        while not s.done:
            acts = [[rng.randrange(cfg.n_actions) for _ in cfg.controlled] for _ in (0, 1)]
            s, events, _ = step(s, acts)
            trace.append(step_record(s, acts, events))
        return trace

    assert run() == run()


def test_replay_round_trip(tmp_path):
    cfg = EnvConfig(steps_total=20)
    s = reset_match(cfg, 1)
    records = [initial_record(s)]
    while not s.done:
        acts = [[IDLE, RIGHT], [RIGHT, IDLE]]
        s, events, _ = step(s, acts)
        records.append(step_record(s, acts, events))
    path = tmp_path / "r.jsonl"
    write_replay(path, records)
    assert read_replay(path) == records


# ---------------------------------------------------------------- rewards

def test_goal_reward_reaches_every_home_player():
    ev = [Event("goal", 0, 1)]
    assert compute_rewards(ev, RewardConfig(), 0, 2) == [1.0, 1.0]
    assert compute_rewards(ev, RewardConfig(), 1, 2) == [-1.0, -1.0]


def test_out_of_bounds_penalty_is_individual():
    ev = [Event("out_of_bounds", 0, 1)]
    assert compute_rewards(ev, RewardConfig(), 0, 2) == [0.0, -0.001]


def test_optional_terms_only_when_enabled():
    ev = [Event("hold_ball", 0, 0), Event("slide_success", 0, 1), Event("secondary_attack", 0, 1)]
    assert compute_rewards(ev, RewardConfig(), 0, 2) == [0.0, 0.0]
    on = RewardConfig(use_hold_ball=True, use_successful_slide=True, use_secondary_attack=True)
    assert compute_rewards(ev, on, 0, 2) == pytest.approx([0.0003, 0.2])


def test_goal_clip_bounds_difference():
    assert goal_difference((5, 0), 0, clip=True) == 3
    assert goal_difference((5, 0), 1, clip=True) == -3
    assert goal_difference((5, 0), 0, clip=False) == 5
    ev = [Event("result", -1, 5, 0)]
    assert compute_rewards(ev, RewardConfig(goal_clip=True), 0, 1) == [2.0]
    assert compute_rewards(ev, RewardConfig(goal_clip=True), 1, 1) == [-2.0]


def test_possession_change_rewards():
    ev = [Event("possession", 1, 0, 1)]
    assert compute_rewards(ev, RewardConfig(), 1, 2) == [0.2, 0.2]
    assert compute_rewards(ev, RewardConfig(), 0, 2) == [-0.2, -0.2]


# ---------------------------------------------------------------- masks

def test_mask_far_from_free_ball():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    park_everyone(s)
    place(s, 0, 0, 15, 8)
    free_ball(s, 20, 8)
    m = legal_action_mask(s, 0, 0)
    assert not m[SHOT] and not m[SHORT_PASS] and not m[LONG_PASS] and not m[SLIDE]
    assert all(m[a] for a in range(1, 9)) and m[IDLE]


def test_mask_no_shot_in_own_half():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    place(s, 0, 0, 4, 8)
    give_ball(s, 0, 0)
    m = legal_action_mask(s, 0, 0)
    assert not m[SHOT] and m[SHORT_PASS] and m[LONG_PASS]
    # the same cell is the attacking half for the away team
    s2 = reset_match(cfg, 0)
    place(s2, 1, 0, 4, 8)
    give_ball(s2, 1, 0)
    assert legal_action_mask(s2, 1, 0)[SHOT]


def test_mask_sticky_toggles():
    cfg = EnvConfig(sticky_actions=True)
    s = reset_match(cfg, 0)
    p = s.players[0][1]
    p.sprinting = True
    m = legal_action_mask(s, 0, 1)
    assert not m[SPRINT] and m[RELEASE_SPRINT]
    assert m[DRIBBLE] and not m[RELEASE_DRIBBLE]
    assert len(m) == 17


def test_mask_slide_when_opponent_carries():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    give_ball(s, 1, 0)
    far = s.players[0][1]
    assert legal_action_mask(s, 0, far.index)[SLIDE]
    assert not legal_action_mask(s, 1, 1)[SLIDE] or max(
        abs(s.players[1][1].x - s.ball.x), abs(s.players[1][1].y - s.ball.y)) <= 1


# ---------------------------------------------------------------- observations

def mirrored(state):
    """The same situation with the teams' roles swapped and x reflected."""
    cfg = state.config
    m = reset_match(cfg, 0)
    for t in (0, 1):
        for p in state.players[t]:
            q = m.players[1 - t][p.index]
            q.x, q.y, q.facing = cfg.width - 1 - p.x, p.y, MIRROR_DIR[p.facing]
            q.sprinting, q.dribbling = p.sprinting, p.dribbling
    owner = state.ball.owner
    m.ball = BallState(cfg.width - 1 - state.ball.x, state.ball.y,
                       None if owner is None else (1 - owner[0], owner[1]))
    m.score = [state.score[1], state.score[0]]
    m.steps_elapsed = state.steps_elapsed
    m.game_mode = state.game_mode
    return m


def random_state(seed, cfg=None):
    cfg = cfg or EnvConfig(sticky_actions=True)
    s = reset_match(cfg, seed)
    rng = random.Random(seed)
    for _ in range(rng.randint(0, 80)):
        acts = [[rng.randrange(cfg.n_actions) for _ in cfg.controlled] for _ in (0, 1)]
        s, _, done = step(s, acts)
        if done:
            break
    return s


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_away_observation_equals_home_under_reflection(seed):
    s = random_state(seed)
    m = mirrored(s)
    for k in s.config.controlled:
        np.testing.assert_array_equal(encode_observation(s, 0, k), encode_observation(m, 1, k))
        np.testing.assert_array_equal(encode_observation(s, 1, k), encode_observation(m, 0, k))
    np.testing.assert_array_equal(encode_global(s, 0), encode_global(m, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_observation_bounds_and_mask_block(seed):
    s = random_state(seed)
    enc = encoder_for(s.config)
    b = enc.encode([s], with_global=True)
    assert b.obs.shape[-1] == enc.base_dim
    assert np.all(b.obs >= -1) and np.all(b.obs <= 1)
    assert np.all(b.global_obs >= -1) and np.all(b.global_obs <= 1)
    start = sum(v for k, v in enc.blocks.items() if k in (
        "controlling_player", "ball", "teammates", "closest_teammate", "opponents", "closest_opponent"))
    for t in (0, 1):
        for k in s.config.controlled:
            ref = legal_action_mask(s, t, k)
            assert b.mask[0, t, k].tolist() == ref
            assert b.obs[0, t, k, start:start + enc.A].tolist() == [float(v) for v in ref]


def test_history_depth_changes_length_by_base_blocks():
    s = reset_match(EnvConfig(), 0)
    base = encode_observation(s, 0, 0, history_depth=0)
    stacked = encode_observation(s, 0, 0, history_depth=2)
    assert len(stacked) - len(base) == 2 * len(base)
    assert np.all(stacked[len(base):] == 0)  # zero-padded at episode start


def test_history_stack_shifts_frames():
    h = HistoryStack(2, 2)
    a, b, c = np.array([1.0, 1.0]), np.array([2.0, 2.0]), np.array([3.0, 3.0])
    h.push(a)
    h.push(b)
    out = h.push(c)
    assert out.tolist() == [3, 3, 2, 2, 1, 1]
    h.reset()
    assert h.push(a).tolist() == [1, 1, 0, 0, 0, 0]


def test_ball_distance_feature_at_kickoff():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    enc = encoder_for(cfg)
    obs = encode_observation(s, 0, 1)
    off = enc.blocks["controlling_player"] + 4  # ball block: x, y, dx, dy, distance
    p = s.players[0][1]
    want = math.hypot(s.ball.x - p.x, s.ball.y - p.y) / math.hypot(cfg.width - 1, cfg.height - 1)
    assert obs[off] == pytest.approx(want, abs=1e-12)
    assert encode_observation(s, 0, 0)[off] == 0.0  # the kicker stands on the ball


def test_goal_clip_changes_only_the_score_feature():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    s.score = [5, 0]
    a = encode_observation(s, 0, 0, goal_clip=False)
    b = encode_observation(s, 0, 0, goal_clip=True)
    diff = np.flatnonzero(a != b)
    assert len(diff) == 1 and b[diff[0]] == 1.0 and a[diff[0]] == 0.5


# ---------------------------------------------------------------- scripted baseline

def test_scripted_chases_distant_ball():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    park_everyone(s)
    place(s, 0, 0, 5, 5)
    free_ball(s, 15, 5)
    assert scripted_action(s, 0, 0) == RIGHT


def test_scripted_shoots_next_to_goal():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    place(s, 0, 0, cfg.width - 2, 8)
    give_ball(s, 0, 0)
    assert scripted_action(s, 0, 0) == SHOT
    s2 = reset_match(cfg, 0)
    place(s2, 1, 0, 1, 8)  # away attacks x = 0
    give_ball(s2, 1, 0)
    assert scripted_action(s2, 1, 0) == SHOT


def test_scripted_passes_under_pressure():
    cfg = EnvConfig()
    s = reset_match(cfg, 0)
    park_everyone(s)
    place(s, 0, 0, 8, 8, facing=4)
    place(s, 0, 1, 12, 8)
    place(s, 1, 0, 9, 8)
    give_ball(s, 0, 0)
    assert scripted_action(s, 0, 0) == SHORT_PASS
    place(s, 1, 1, 12, 9)  # teammate now marked: carry on instead
    assert scripted_action(s, 0, 0) != SHORT_PASS


# ---------------------------------------------------------------- scenarios

def test_scenarios_respect_regions():
    cfg = EnvConfig()
    specs = default_scenarios(cfg)
    assert set(specs) == {"kickoff", "corner", "free_kick", "penalty_box_attack", "solo"}
    W = cfg.width
    for spec in specs.values():
        for seed in range(200):
            s = reset_scenario(spec, cfg, seed)
            off = s.scenario_offense
            ego = (lambda x, y: (x, y)) if off == 0 else (lambda x, y: (W - 1 - x, y))
            assert s.steps_total == spec.max_steps <= 512
            assert in_rect(spec.ball_region, *ego(s.ball.x, s.ball.y))
            assert s.ball.owner == (off, 0)
            for k, r in enumerate(spec.offense_regions):
                p = s.players[off][k + 1]
                assert in_rect(r, *ego(p.x, p.y))
            for k, r in enumerate(spec.defense_regions):
                p = s.players[1 - off][k]
                assert in_rect(r, *ego(p.x, p.y))
            for t in (0, 1):
                k = s.players[t][cfg.keeper_index]
                assert (k.x, k.y) == cfg.keeper_cell(t)


def test_solo_has_one_boxed_defender():
    cfg = EnvConfig()
    solo = default_scenarios(cfg)["solo"]
    assert len(solo.defense_regions) == 1 and solo.offense_regions == ()


def test_scenario_side_assignment_is_balanced():
    cfg = EnvConfig()
    spec = default_scenarios(cfg)["corner"]
    rng = random.Random(0)
    offense = sum(reset_scenario(spec, cfg, rng).scenario_offense for _ in range(10_000))
    assert abs(offense / 10_000 - 0.5) <= 0.02


def test_bad_scenario_regions_rejected():
    cfg = EnvConfig()
    with pytest.raises(ScenarioError):
        reset_scenario(ScenarioSpec("empty", (5, 5, 4, 5)), cfg, 0)
    with pytest.raises(ScenarioError):
        reset_scenario(ScenarioSpec("outside", (20, 0, 30, 3)), cfg, 0)
    with pytest.raises(ScenarioError):
        reset_scenario(ScenarioSpec("goal", (cfg.width - 1, 8, cfg.width - 1, 8)), cfg, 0)
    with pytest.raises(ScenarioError):
        reset_scenario(ScenarioSpec("long", (10, 5, 12, 8), max_steps=600), cfg, 0)


def test_scenario_ends_on_turnover():
    cfg = EnvConfig()
    spec = default_scenarios(cfg)["solo"]
    s = reset_scenario(spec, cfg, 0, offense=0)
    park_everyone(s)
    d = s.players[1][0]
    d.x, d.y = s.ball.x, s.ball.y
    s.ball.owner = (1, 0)
    s.possession_team = 1
    s, _, done = step(s, [[IDLE, IDLE], [IDLE, IDLE]])
    assert done


def test_scenario_spec_dict_round_trip():
    for spec in default_scenarios(EnvConfig()).values():
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------- invariants

def test_fuzzed_episodes_keep_invariants():
    report = run_audit(300, seed=1)
    assert report.episodes == 300
    assert report.violations == []
