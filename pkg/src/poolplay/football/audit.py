"""Randomised episode audit used by the invariant tests and the fuzz criterion."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .dynamics import step
from .observation import legal_action_mask
from .rewards import RewardConfig, compute_rewards, reward_terms
from .scenarios import MAX_SCENARIO_STEPS, default_scenarios, reset_scenario
from .state import EnvConfig, MatchState, reset_match

ALL_SHAPING = RewardConfig(use_hold_ball=True, use_secondary_attack=True, use_successful_slide=True)


@dataclass
class AuditReport:
    episodes: int = 0
    steps: int = 0
    violations: list[str] = field(default_factory=list)

    def fail(self, msg: str) -> None:
        if len(self.violations) < 50:
            self.violations.append(msg)


def check_state(state: MatchState, report: AuditReport, where: str) -> None:
    cfg = state.config
    for team in state.players:
        for p in team:
            if not (0 <= p.x < cfg.width and 0 <= p.y < cfg.height):
                report.fail(f"{where}: player {p.team}/{p.index} out of bounds at {(p.x, p.y)}")
    owner = state.ball.owner
    if owner is not None:
        o = state.players[owner[0]][owner[1]]
        if (o.x, o.y) != (state.ball.x, state.ball.y):
            report.fail(f"{where}: owned ball not at its owner's cell")
    elif not (0 <= state.ball.x < cfg.width and 0 <= state.ball.y < cfg.height):
        report.fail(f"{where}: free ball off the field")
    if state.steps_elapsed > state.steps_total:
        report.fail(f"{where}: steps_elapsed exceeds steps_total")
    if state.scenario_active and state.steps_total > MAX_SCENARIO_STEPS:
        report.fail(f"{where}: scenario longer than {MAX_SCENARIO_STEPS} steps")


def random_config(rng: random.Random) -> EnvConfig:
    return EnvConfig(
        team_size=rng.choice([1, 2, 2, 3]),
        steps_total=rng.randint(10, 120),
        sticky_actions=rng.random() < 0.5,
        learned_keeper=rng.random() < 0.2,
        ball_reach=rng.choice([1, 1, 2]),
    )


def audit_episode(seed: int, report: AuditReport, masked_prob: float = 0.7) -> None:
    """Play one episode with random (mostly masked) actions and check every invariant."""
    rng = random.Random(seed)
    cfg = random_config(rng)
    if rng.random() < 0.4:
        specs = list(default_scenarios(cfg).values())
        state = reset_scenario(rng.choice(specs), cfg, rng.randrange(2**31))
    else:
        state = reset_match(cfg, rng.randrange(2**31), kickoff_team=rng.randrange(2))
    rcfg = ALL_SHAPING if rng.random() < 0.5 else RewardConfig(goal_clip=True)
    ctrl = cfg.controlled
    n = len(ctrl)
    goals = [0, 0]
    lose_goal_terms = [0, 0]
    goal_terms = [0, 0]
    gets = [0, 0]
    loses = [0, 0]
    check_state(state, report, f"seed {seed} reset")
    steps = 0
    while not state.done:
        masks = [[legal_action_mask(state, t, i) for i in ctrl] for t in (0, 1)]
        use_mask = rng.random() < masked_prob
        acts = []
        for t in (0, 1):
            team_acts = []
            for k in range(n):
                if use_mask:
                    legal = [a for a, ok in enumerate(masks[t][k]) if ok]
                    team_acts.append(rng.choice(legal))
                else:
                    team_acts.append(rng.randrange(cfg.n_actions))
            acts.append(team_acts)
        state, events, _ = step(state, acts)
        steps += 1
        if use_mask:
            for e in events:
                if e.kind == "illegal" and e.player in ctrl:
                    report.fail(f"seed {seed} step {steps}: masked-legal action {e.other} degraded")
        for t in (0, 1):
            terms = reward_terms(events, rcfg, t)
            for name, _, _ in terms:
                if name == "goal":
                    goal_terms[t] += 1
                elif name == "lose_goal":
                    lose_goal_terms[t] += 1
                elif name == "get_possession":
                    gets[t] += 1
                elif name == "lose_possession":
                    loses[t] += 1
            rewards = compute_rewards(events, rcfg, t, n)
            expected = [0.0] * n
            for _, player, value in terms:
                for i in (range(n) if player < 0 else [player] if player < n else []):
                    expected[i] += value
            if rewards != expected:
                report.fail(f"seed {seed} step {steps}: reward audit mismatch")
        for e in events:
            if e.kind == "goal":
                goals[e.team] += 1
        check_state(state, report, f"seed {seed} step {steps}")
        if steps > MAX_SCENARIO_STEPS and state.scenario_active:
            report.fail(f"seed {seed}: scenario ran past {MAX_SCENARIO_STEPS} steps")
            break
    for t in (0, 1):
        if goal_terms[t] != lose_goal_terms[1 - t]:
            report.fail(f"seed {seed}: goal events not zero-sum")
        if gets[t] != loses[1 - t]:
            report.fail(f"seed {seed}: possession bookkeeping mismatch")
    if goals != list(state.score):
        report.fail(f"seed {seed}: goal events {goals} disagree with score {state.score}")
    report.episodes += 1
    report.steps += steps


def run_audit(n_episodes: int, seed: int = 0) -> AuditReport:
    report = AuditReport()
    for k in range(n_episodes):
        audit_episode(seed * 1_000_003 + k, report)
    return report
