"""Per-player vector observations, legal-action masks and MAPPO global state.

Every team sees the pitch in its own frame (attacking towards +x); the away
team's view is the x-reflection of the world.  Feature blocks, in order:

    controlling player | ball | teammates | closest teammate | opponents |
    closest opponent | available actions | match state | sticky actions |
    player distance to ball

All features lie in [-1, 1].  The encoder is vectorised over a batch of
matches and both teams; :func:`encode_observation` is the single-player view.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .actions import (
    DRIBBLE, KICKS, MIRROR_DIR, RELEASE_DRIBBLE, RELEASE_SPRINT, SHOT, SLIDE, SPRINT,
)
from .dynamics import ball_within_reach, cheb, in_own_half
from .rewards import GOAL_CLIP
from .state import GAME_MODES, EnvConfig, MatchState

UNCLIPPED_GOAL_SCALE = 10.0
SCORE_SCALE = 10.0


def legal_action_mask(state: MatchState, team: int, index: int) -> list[bool]:
    """Action mask rules; scalar reference used by tests and the scripted policy.

    (1) passes/shot only when the ball is at the player's feet or loose within
    reach; (2) slide only near the ball or when an opponent controls it;
    (3)/(4) sticky toggles only in the matching state; (5) no shot from the
    own half.
    """
    cfg = state.config
    p = state.players[team][index]
    mask = [True] * cfg.n_actions
    near = ball_within_reach(state, p)
    for a in KICKS:
        mask[a] = near
    owner = state.ball.owner
    opp_control = owner is not None and owner[0] != team
    mask[SLIDE] = cheb(p.x, p.y, state.ball.x, state.ball.y) <= cfg.ball_reach or opp_control
    if in_own_half(state, team, p.x):
        mask[SHOT] = False
    if cfg.sticky_actions:
        mask[SPRINT] = not p.sprinting
        mask[RELEASE_SPRINT] = p.sprinting
        mask[DRIBBLE] = not p.dribbling
        mask[RELEASE_DRIBBLE] = p.dribbling
    return mask


@dataclass
class EncodedBatch:
    obs: np.ndarray  # (N, 2, n_controlled, base_dim), indexed by team
    mask: np.ndarray  # (N, 2, n_controlled, n_actions)
    global_obs: Optional[np.ndarray]  # (N, 2, global_dim)


class ObservationEncoder:
    def __init__(self, config: EnvConfig):
        self.cfg = config
        P = config.players_per_team
        self.P = P
        self.Pc = len(config.controlled)
        self.A = config.n_actions
        self.blocks = {
            "controlling_player": 14,
            "ball": 9,
            "teammates": 5 * (P - 1),
            "closest_teammate": 4,
            "opponents": 5 * P,
            "closest_opponent": 4,
            "available_actions": self.A,
            "match_state": 4 + len(GAME_MODES),
            "sticky_actions": 2 * P,
            "distance_to_ball": 2 * P,
        }
        self.base_dim = sum(self.blocks.values())
        self.global_dim = 6 * 2 * P + 5 + 4 + len(GAME_MODES)
        self._tm_idx = np.array([[j for j in range(P) if j != c] for c in range(self.Pc)], dtype=int)
        self._mirror = np.array(MIRROR_DIR)
        self._keeper = np.zeros(P)
        self._keeper[config.keeper_index] = 1.0
        self._eye8 = np.eye(8)
        self._eye_modes = np.eye(len(GAME_MODES))
        self._mode_idx = {m: k for k, m in enumerate(GAME_MODES)}

    def obs_dim(self, history_depth: int = 0) -> int:
        return self.base_dim * (history_depth + 1)

    def encode(self, states: Sequence[MatchState], goal_clip: Optional[np.ndarray] = None,
               with_global: bool = False) -> EncodedBatch:
        cfg = self.cfg
        N, P, Pc = len(states), self.P, self.Pc
        W1, H1 = cfg.width - 1, cfg.height - 1
        diag = float(np.hypot(W1, H1))

        raw = np.array(
            [[[(p.x, p.y, p.facing, p.sprinting, p.dribbling) for p in team] for team in s.players]
             for s in states],
            dtype=float,
        ).reshape(N, 2, P, 5)
        meta = np.array(
            [(s.ball.x, s.ball.y,
              -1 if s.ball.owner is None else s.ball.owner[0],
              -1 if s.ball.owner is None else s.ball.owner[1],
              s.score[0], s.score[1], s.steps_elapsed, s.steps_total, self._mode_idx[s.game_mode])
             for s in states],
            dtype=float,
        ).reshape(N, 9)

        # ego arrays: E[:, v, 0] = own team of perspective v, E[:, v, 1] = opponents
        E = np.empty((N, 2, 2, P, 5))
        E[:, 0, 0], E[:, 0, 1] = raw[:, 0], raw[:, 1]
        E[:, 1, 0], E[:, 1, 1] = raw[:, 1], raw[:, 0]
        E[:, 1, :, :, 0] = W1 - E[:, 1, :, :, 0]
        E[:, 1, :, :, 2] = self._mirror[E[:, 1, :, :, 2].astype(int)]
        bx = np.stack([meta[:, 0], W1 - meta[:, 0]], axis=1)  # (N, 2)
        by = np.stack([meta[:, 1], meta[:, 1]], axis=1)
        owner_t, owner_i = meta[:, 2].astype(int), meta[:, 3].astype(int)
        persp = np.array([0, 1])
        own_owned = owner_t[:, None] == persp[None, :]  # (N, 2)
        opp_owned = (owner_t[:, None] == (1 - persp)[None, :])
        free = (owner_t < 0)[:, None].repeat(2, axis=1)
        idx = np.arange(P)
        hb_own = own_owned[:, :, None] & (owner_i[:, None, None] == idx)  # (N, 2, P)
        hb_opp = opp_owned[:, :, None] & (owner_i[:, None, None] == idx)

        xs, ys = E[..., 0], E[..., 1]  # (N, 2, 2, P)
        nx = 2 * xs / W1 - 1
        ny = 2 * ys / H1 - 1
        sx, sy = xs[:, :, 0, :Pc], ys[:, :, 0, :Pc]  # controlled players (N, 2, Pc)

        def rel(tx, ty):
            dx, dy = tx - sx[..., None], ty - sy[..., None]
            return dx / W1, dy / H1, np.hypot(dx, dy) / diag

        # controlling player
        fac = E[:, :, 0, :Pc, 2].astype(int)
        self_block = np.concatenate([
            nx[:, :, 0, :Pc, None], ny[:, :, 0, :Pc, None], self._eye8[fac],
            E[:, :, 0, :Pc, 3:5], np.broadcast_to(self._keeper[:Pc], (N, 2, Pc))[..., None],
            hb_own[:, :, :Pc, None],
        ], axis=-1)

        # ball
        bdx, bdy = bx[:, :, None] - sx, by[:, :, None] - sy
        bdist = np.hypot(bdx, bdy) / diag
        is_self = hb_own[:, :, :Pc]
        owner_cat = np.stack([
            is_self, own_owned[:, :, None] & ~is_self,
            np.broadcast_to(opp_owned[:, :, None], is_self.shape),
            np.broadcast_to(free[:, :, None], is_self.shape),
        ], axis=-1)
        ball_block = np.concatenate([
            np.broadcast_to((2 * bx / W1 - 1)[:, :, None, None], (N, 2, Pc, 1)),
            np.broadcast_to((2 * by / H1 - 1)[:, :, None, None], (N, 2, Pc, 1)),
            (bdx / W1)[..., None], (bdy / H1)[..., None], bdist[..., None], owner_cat,
        ], axis=-1)

        # teammates
        tx, ty = xs[:, :, 0][:, :, self._tm_idx], ys[:, :, 0][:, :, self._tm_idx]  # (N, 2, Pc, P-1)
        tdx, tdy, tdist = (tx - sx[..., None]) / W1, (ty - sy[..., None]) / H1, None
        tdist = np.hypot(tx - sx[..., None], ty - sy[..., None]) / diag
        thb = hb_own[:, :, self._tm_idx]
        team_block = np.stack([2 * tx / W1 - 1, 2 * ty / H1 - 1, tdx, tdy, thb], axis=-1).reshape(N, 2, Pc, -1)
        k = tdist.argmin(axis=-1)[..., None]
        closest_tm = np.concatenate([
            np.take_along_axis(tdx, k, -1), np.take_along_axis(tdy, k, -1),
            np.take_along_axis(tdist, k, -1), np.take_along_axis(thb, k, -1),
        ], axis=-1)

        # opponents
        ox = np.broadcast_to(xs[:, :, 1][:, :, None, :], (N, 2, Pc, P))
        oy = np.broadcast_to(ys[:, :, 1][:, :, None, :], (N, 2, Pc, P))
        odx, ody, odist = rel(ox, oy)
        ohb = np.broadcast_to(hb_opp[:, :, None, :], (N, 2, Pc, P))
        opp_block = np.stack([2 * ox / W1 - 1, 2 * oy / H1 - 1, odx, ody, ohb], axis=-1).reshape(N, 2, Pc, -1)
        k = odist.argmin(axis=-1)[..., None]
        closest_opp = np.concatenate([
            np.take_along_axis(odx, k, -1), np.take_along_axis(ody, k, -1),
            np.take_along_axis(odist, k, -1), np.take_along_axis(ohb, k, -1),
        ], axis=-1)

        # available actions
        reach = cfg.ball_reach
        bcheb = np.maximum(np.abs(bdx), np.abs(bdy))
        near = is_self | (free[:, :, None] & (bcheb <= reach))
        mask = np.ones((N, 2, Pc, self.A), dtype=bool)
        for a in KICKS:
            mask[..., a] = near
        mask[..., SLIDE] = (bcheb <= reach) | opp_owned[:, :, None]
        mask[..., SHOT] &= sx >= cfg.width // 2
        if cfg.sticky_actions:
            spr = E[:, :, 0, :Pc, 3] > 0
            dri = E[:, :, 0, :Pc, 4] > 0
            mask[..., SPRINT] = ~spr
            mask[..., RELEASE_SPRINT] = spr
            mask[..., DRIBBLE] = ~dri
            mask[..., RELEASE_DRIBBLE] = dri

        # match state
        score = meta[:, 4:6]
        own_score = np.stack([score[:, 0], score[:, 1]], axis=1)
        opp_score = np.stack([score[:, 1], score[:, 0]], axis=1)
        diff = own_score - opp_score
        clip = np.zeros((N, 2), dtype=bool) if goal_clip is None else np.asarray(goal_clip, dtype=bool)
        diff_feat = np.where(clip, np.clip(diff, -GOAL_CLIP, GOAL_CLIP) / GOAL_CLIP,
                             np.clip(diff / UNCLIPPED_GOAL_SCALE, -1, 1))
        left = 1.0 - meta[:, 6] / np.maximum(meta[:, 7], 1)
        modes = self._eye_modes[meta[:, 8].astype(int)]
        match = np.concatenate([
            np.broadcast_to(left[:, None, None], (N, 2, 1)), diff_feat[..., None],
            np.minimum(own_score / SCORE_SCALE, 1)[..., None], np.minimum(opp_score / SCORE_SCALE, 1)[..., None],
            np.broadcast_to(modes[:, None, :], (N, 2, len(GAME_MODES))),
        ], axis=-1)
        match_block = np.broadcast_to(match[:, :, None, :], (N, 2, Pc, match.shape[-1]))

        sticky = np.broadcast_to(E[:, :, 0, :, 3:5].reshape(N, 2, 1, 2 * P), (N, 2, Pc, 2 * P))
        allx = np.concatenate([xs[:, :, 0], xs[:, :, 1]], axis=-1)  # (N, 2, 2P)
        ally = np.concatenate([ys[:, :, 0], ys[:, :, 1]], axis=-1)
        bd = np.hypot(allx - bx[:, :, None], ally - by[:, :, None]) / diag
        dist_block = np.broadcast_to(bd[:, :, None, :], (N, 2, Pc, 2 * P))

        obs = np.concatenate([
            self_block, ball_block, team_block, closest_tm, opp_block, closest_opp,
            mask.astype(float), match_block, sticky, dist_block,
        ], axis=-1)

        glob = None
        if with_global:
            keeper = np.broadcast_to(self._keeper, (N, 2, P))
            per = []
            for side, hb in ((0, hb_own), (1, hb_opp)):
                per.append(np.stack([nx[:, :, side], ny[:, :, side], hb, E[:, :, side, :, 3],
                                     E[:, :, side, :, 4], keeper], axis=-1).reshape(N, 2, -1))
            ballg = np.stack([2 * bx / W1 - 1, 2 * by / H1 - 1, own_owned, opp_owned, free], axis=-1)
            glob = np.concatenate(per + [ballg, match], axis=-1)
        return EncodedBatch(obs, mask, glob)


class HistoryStack:
    """Current observation followed by the previous ``depth`` ones (zero-padded)."""

    def __init__(self, base_dim: int, depth: int):
        self.base_dim = base_dim
        self.depth = depth
        self.frames: deque = deque(maxlen=depth)

    def reset(self) -> None:
        self.frames.clear()

    def push(self, base_obs: np.ndarray) -> np.ndarray:
        """Stack along the last axis; ``base_obs`` may carry leading batch axes."""
        if self.depth == 0:
            return base_obs
        past = list(self.frames)[::-1]
        pad = [np.zeros_like(base_obs)] * (self.depth - len(past))
        out = np.concatenate([base_obs] + past + pad, axis=-1)
        self.frames.append(base_obs.copy())
        return out


_ENCODERS: dict = {}


def encoder_for(config: EnvConfig) -> ObservationEncoder:
    enc = _ENCODERS.get(config)
    if enc is None:
        enc = _ENCODERS[config] = ObservationEncoder(config)
    return enc


def encode_observation(state: MatchState, team: int, player: int, history_depth: int = 0,
                       history: Optional[HistoryStack] = None, goal_clip: bool = False) -> np.ndarray:
    """Observation of one controlled player; pass a persistent ``history`` to stack frames."""
    enc = encoder_for(state.config)
    clip = np.array([[goal_clip, goal_clip]])
    base = enc.encode([state], goal_clip=clip).obs[0, team, player]
    if history_depth == 0:
        return base
    if history is None:
        history = HistoryStack(enc.base_dim, history_depth)
    return history.push(base)


def encode_global(state: MatchState, team: int) -> np.ndarray:
    return encoder_for(state.config).encode([state], with_global=True).global_obs[0, team]
