"""Policies and the vectorised match runner.

Many matches advance in lock-step; at every step the observations of all
matches are encoded in one batch and each distinct policy runs one batched
forward pass over the seats it occupies.  Every match owns its own action
RNG, so results do not depend on how matches are batched together.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .checkpoint import ObsConfig
from .football.dynamics import step as env_step
from .football.observation import encoder_for
from .football.rewards import RewardConfig, compute_rewards
from .football.scripted import scripted_team_actions
from .football.state import EnvConfig, MatchState, reset_match
from .netcore import PolicyValueNet, forward, masked_log_softmax, policy_logits, sample_from_logp

log = logging.getLogger(__name__)


class Policy:
    """Something that picks actions for one team's controlled players."""

    name = "policy"
    obs_config = ObsConfig()
    needs_obs = True

    def act(self, obs: np.ndarray, mask: np.ndarray, u: np.ndarray,
            seats: Sequence[tuple[MatchState, int]]) -> tuple[np.ndarray, np.ndarray]:
        """Rows are (seat, player) pairs; returns (actions, log-probabilities)."""
        raise NotImplementedError


class NetPolicy(Policy):
    def __init__(self, net: PolicyValueNet, obs_config: ObsConfig = ObsConfig(), name: str = "net",
                 temperature: float = 1.0, greedy: bool = False):
        self.net = net
        self.obs_config = obs_config
        self.name = name
        self.temperature = temperature
        self.greedy = greedy

    def log_probs(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        logits = policy_logits(self.net, obs)
        return masked_log_softmax(logits, mask if self.obs_config.use_mask else None, self.temperature)

    def act(self, obs, mask, u, seats):
        logp = self.log_probs(obs, mask)
        if self.greedy:
            a = logp.argmax(axis=1)
            return a, logp[np.arange(len(a)), a]
        return sample_from_logp(logp, u)


class ScriptedPolicy(Policy):
    name = "scripted"
    needs_obs = False

    def act(self, obs, mask, u, seats):
        acts = [a for state, side in seats for a in scripted_team_actions(state, side)]
        a = np.array(acts, dtype=int)
        return a, np.zeros(len(a))


class UniformPolicy(Policy):
    """Uniform over the legal actions (masked) or over everything."""

    name = "uniform"

    def __init__(self, use_mask: bool = False):
        self.obs_config = ObsConfig(use_mask=use_mask)

    def act(self, obs, mask, u, seats):
        m = mask if self.obs_config.use_mask else np.ones_like(mask)
        logp = masked_log_softmax(np.zeros(m.shape), m)
        return sample_from_logp(logp, u)


@dataclass
class Seat:
    policy: Policy
    history: Optional[deque] = None  # previous base frames, newest last

    def reset(self) -> None:
        if self.history is not None:
            self.history.clear()


@dataclass
class Match:
    state: MatchState
    seats: list[Seat]
    rng: np.random.Generator  # action sampling for both sides
    tag: object = None
    start_step: int = 0


def make_seat(policy: Policy) -> Seat:
    d = policy.obs_config.history_depth
    return Seat(policy, deque(maxlen=d) if d > 0 else None)


def _stack(seat: Seat, base: np.ndarray) -> np.ndarray:
    """Current base frame followed by ``depth`` previous ones, zero-padded."""
    if seat.history is None:
        return base
    depth = seat.history.maxlen
    past = list(seat.history)[::-1]
    parts = [base] + past + [np.zeros_like(base)] * (depth - len(past))
    seat.history.append(base)
    return np.concatenate(parts, axis=-1)


@dataclass
class StepView:
    """Per-seat inputs of one lock-step."""

    obs: dict  # (match index, side) -> (n_controlled, D) stacked observation
    mask: np.ndarray  # (N, 2, n_controlled, A)
    global_obs: Optional[np.ndarray]  # (N, 2, G)


def observe(matches: Sequence[Match], with_global: bool = False) -> StepView:
    cfg = matches[0].state.config
    enc = encoder_for(cfg)
    clip = np.array([[m.seats[s].policy.obs_config.goal_clip for s in (0, 1)] for m in matches])
    batch = enc.encode([m.state for m in matches], goal_clip=clip, with_global=with_global)
    obs = {}
    for i, m in enumerate(matches):
        for side in (0, 1):
            seat = m.seats[side]
            if seat.policy.needs_obs:
                obs[i, side] = _stack(seat, batch.obs[i, side])
    return StepView(obs, batch.mask, batch.global_obs)


def choose_actions(matches: Sequence[Match], view: StepView,
                   skip: Optional[set] = None) -> dict:
    """Group seats by policy and run one forward per group; returns {(i, side): actions}."""
    groups: dict[int, list[tuple[int, int]]] = {}
    owners: dict[int, Policy] = {}
    for i, m in enumerate(matches):
        for side in (0, 1):
            if skip and (i, side) in skip:
                continue
            p = m.seats[side].policy
            groups.setdefault(id(p), []).append((i, side))
            owners[id(p)] = p
    n_ctrl = view.mask.shape[2]
    out = {}
    for key, seats in groups.items():
        p = owners[key]
        obs = np.concatenate([view.obs[s] for s in seats]) if p.needs_obs else None
        mask = np.concatenate([view.mask[i, side] for i, side in seats])
        u = np.concatenate([matches[i].rng.random(n_ctrl) for i, _ in seats])
        acts, _ = p.act(obs, mask, u, [(matches[i].state, side) for i, side in seats])
        for k, s in enumerate(seats):
            out[s] = acts[k * n_ctrl:(k + 1) * n_ctrl]
    return out


# ---------------------------------------------------------------- training segments

@dataclass
class EpisodeResult:
    opponent: object
    learner_side: int
    goals_for: int
    goals_against: int
    length: int
    scenario: Optional[str]
    counters: list[dict]

    @property
    def outcome(self) -> str:
        if self.goals_for > self.goals_against:
            return "win"
        if self.goals_for < self.goals_against:
            return "loss"
        return "draw"


@dataclass
class Segment:
    """T steps of S = n_envs * n_controlled player streams, time-major."""

    obs: np.ndarray  # (T, S, D)
    global_obs: Optional[np.ndarray]  # (T, S, G + n_controlled)
    mask: np.ndarray  # (T, S, A) bool
    actions: np.ndarray  # (T, S)
    logp: np.ndarray
    values: np.ndarray
    ivalues: Optional[np.ndarray]
    rewards: np.ndarray
    dones: np.ndarray  # episode ended after this step
    valid: np.ndarray  # False for samples of a discarded (crashed) episode
    player: np.ndarray  # (S,) controlled-player index of each stream
    last_obs: np.ndarray  # (S, D) observation after the final step
    last_global: Optional[np.ndarray]
    last_values: np.ndarray  # (S,) bootstrap values
    last_ivalues: Optional[np.ndarray]

    @property
    def n_samples(self) -> int:
        return int(self.valid.sum())


OpponentFn = Callable[[random.Random], tuple[object, Policy]]
ResetFn = Callable[[random.Random], MatchState]


class SegmentCollector:
    """Keeps ``n_envs`` matches running for one learning agent.

    ``opponent_fn`` is consulted at every episode start (matchmaking hook) and
    ``reset_fn`` builds the start state (full match or scenario).  The learner
    takes a random side per episode.
    """

    def __init__(self, env_config: EnvConfig, n_envs: int, seg_len: int, reward_config: RewardConfig,
                 opponent_fn: OpponentFn, reset_fn: Optional[ResetFn] = None, seed: int = 0,
                 fault_hook: Optional[Callable[[int, int], None]] = None):
        self.cfg = env_config
        self.n_envs = n_envs
        self.seg_len = seg_len
        self.reward_config = reward_config
        self.opponent_fn = opponent_fn
        self.reset_fn = reset_fn or (lambda rng: reset_match(env_config, rng.randrange(2**31),
                                                             kickoff_team=rng.randrange(2)))
        self.rng = random.Random(seed)
        self.fault_hook = fault_hook
        self.matches: list[Match] = []
        self.learner_side: list[int] = []
        self.crashes = 0
        self.env_steps = 0
        self._learner: Optional[NetPolicy] = None

    def _new_episode(self, learner: NetPolicy, k: Optional[int] = None) -> None:
        state = self.reset_fn(self.rng)
        key, opp = self.opponent_fn(self.rng)
        if opp is None:
            opp = learner
        side = self.rng.randrange(2)
        seats = [make_seat(learner), make_seat(opp)]
        if side == 1:
            seats.reverse()
        m = Match(state, seats, np.random.default_rng(self.rng.randrange(2**63)), tag=key)
        if k is None:
            self.matches.append(m)
            self.learner_side.append(side)
        else:
            self.matches[k] = m
            self.learner_side[k] = side

    def _bind(self, learner: NetPolicy) -> None:
        """Point every learner seat (and self-play opponents) at the current learner."""
        if not self.matches:
            for _ in range(self.n_envs):
                self._new_episode(learner)
        elif self._learner is not learner:
            old = self._learner
            for m in self.matches:
                for seat in m.seats:
                    if seat.policy is old:
                        seat.policy = learner
        self._learner = learner

    def collect(self, learner: NetPolicy) -> tuple[Segment, list[EpisodeResult]]:
        self._bind(learner)
        T, N = self.seg_len, self.n_envs
        Pc = len(self.cfg.controlled)
        S = N * Pc
        net = learner.net
        mappo = net.spec.mappo
        rnd = net.spec.rnd
        use_mask = learner.obs_config.use_mask
        D = net.spec.obs_dim
        A = self.cfg.n_actions
        obs = np.zeros((T, S, D))
        gobs = np.zeros((T, S, net.spec.global_obs_dim)) if mappo else None
        masks = np.ones((T, S, A), dtype=bool)
        actions = np.zeros((T, S), dtype=int)
        logp = np.zeros((T, S))
        values = np.zeros((T, S))
        ivalues = np.zeros((T, S)) if rnd else None
        rewards = np.zeros((T, S))
        dones = np.zeros((T, S), dtype=bool)
        valid = np.ones((T, S), dtype=bool)
        eye = np.eye(Pc)
        results: list[EpisodeResult] = []
        ep_start = [0] * N

        def learner_inputs(view: StepView):
            o = np.concatenate([view.obs[i, self.learner_side[i]] for i in range(N)])
            g = None
            if mappo:
                g = np.concatenate([
                    np.hstack([np.repeat(view.global_obs[i, self.learner_side[i]][None], Pc, 0), eye])
                    for i in range(N)])
            mk = np.concatenate([view.mask[i, self.learner_side[i]] for i in range(N)])
            return o, g, mk

        for t in range(T):
            view = observe(self.matches, with_global=mappo)
            o, g, mk = learner_inputs(view)
            out = forward(net, o, global_obs=g)
            lp = masked_log_softmax(out.logits, mk if use_mask else None, learner.temperature)
            u = np.concatenate([m.rng.random(Pc) for m in self.matches])
            a, alp = sample_from_logp(lp, u)
            skip = {(i, self.learner_side[i]) for i in range(N)}
            others = choose_actions(self.matches, view, skip=skip)
            obs[t], masks[t], actions[t], logp[t], values[t] = o, mk, a, alp, out.value
            if mappo:
                gobs[t] = g
            if rnd:
                ivalues[t] = out.intrinsic_value
            for i, m in enumerate(self.matches):
                side = self.learner_side[i]
                joint = [None, None]
                joint[side] = a[i * Pc:(i + 1) * Pc]
                joint[1 - side] = others[i, 1 - side]
                sl = slice(i * Pc, (i + 1) * Pc)
                try:
                    if self.fault_hook is not None:
                        self.fault_hook(i, self.env_steps)
                    _, events, done = env_step(m.state, joint)
                except Exception as exc:  # a broken worker loses its episode, nothing else
                    self.crashes += 1
                    log.warning("episode discarded after worker error: %s", exc)
                    valid[ep_start[i]:t + 1, sl] = False
                    dones[t, sl] = True
                    self._new_episode(learner, i)
                    ep_start[i] = t + 1
                    continue
                self.env_steps += 1
                rewards[t, sl] = compute_rewards(events, self.reward_config, side, Pc)
                if done:
                    dones[t, sl] = True
                    st = m.state
                    results.append(EpisodeResult(
                        m.tag, side, st.score[side], st.score[1 - side], st.steps_elapsed,
                        st.scenario_name, st.counters))
                    self._new_episode(learner, i)
                    ep_start[i] = t + 1

        view = observe(self.matches, with_global=mappo)
        # the bootstrap observation is re-encoded next collect; drop it from the history
        for i, m in enumerate(self.matches):
            for seat in m.seats:
                if seat.history is not None and seat.history:
                    seat.history.pop()
        o, g, _ = learner_inputs(view)
        out = forward(net, o, global_obs=g)
        seg = Segment(
            obs=obs, global_obs=gobs, mask=masks, actions=actions, logp=logp, values=values,
            ivalues=ivalues, rewards=rewards, dones=dones, valid=valid,
            player=np.tile(np.arange(Pc), N), last_obs=o, last_global=g,
            last_values=out.value, last_ivalues=out.intrinsic_value if rnd else None,
        )
        return seg, results


# ---------------------------------------------------------------- whole matches

@dataclass
class MatchRecord:
    """Raw result of one full match between two policies."""

    score: tuple[int, int]
    length: int
    counters: list[dict]
    occupancy: list[np.ndarray]  # per team, (H, W) visits in that team's own frame
    replay: Optional[list] = None


def play_matches(pairs: Sequence[tuple[Policy, Policy]], env_config: EnvConfig, seeds: Sequence[int],
                 with_replay: bool = False, batch: int = 64) -> list[MatchRecord]:
    """Play ``pairs[k][0]`` (home) against ``pairs[k][1]`` (away) with env/action seed ``seeds[k]``."""
    from .football.replay import initial_record, step_record

    records: list[Optional[MatchRecord]] = [None] * len(pairs)
    order = list(range(len(pairs)))
    for lo in range(0, len(order), batch):
        idx = order[lo:lo + batch]
        matches = []
        for k in idx:
            seed = int(seeds[k])
            state = reset_match(env_config, seed, kickoff_team=seed % 2)
            seats = [make_seat(pairs[k][0]), make_seat(pairs[k][1])]
            matches.append(Match(state, seats, np.random.default_rng([seed, 1])))
        occ = [[np.zeros((env_config.height, env_config.width)) for _ in (0, 1)] for _ in idx]
        replays = [[initial_record(m.state)] if with_replay else None for m in matches]
        live = list(range(len(matches)))
        W = env_config.width
        ctrl = env_config.controlled
        while live:
            sub = [matches[j] for j in live]
            view = observe(sub)
            acts = choose_actions(sub, view)
            still = []
            for pos, j in enumerate(live):
                m = matches[j]
                joint = [acts[pos, 0].tolist(), acts[pos, 1].tolist()]
                _, events, done = env_step(m.state, joint)
                for t in (0, 1):
                    for i in ctrl:
                        p = m.state.players[t][i]
                        occ[j][t][p.y, p.x if t == 0 else W - 1 - p.x] += 1
                if replays[j] is not None:
                    replays[j].append(step_record(m.state, joint, events))
                if not done:
                    still.append(j)
            live = still
        for j, k in enumerate(idx):
            st = matches[j].state
            records[k] = MatchRecord((st.score[0], st.score[1]), st.steps_elapsed, st.counters, occ[j],
                                     replays[j])
    return records
