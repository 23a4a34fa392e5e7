"""Generalised advantage estimation and a running reward-scale tracker."""

from __future__ import annotations

from typing import Optional

import numpy as np


def compute_gae(rewards: np.ndarray, values: np.ndarray, terminals: np.ndarray, gamma: float,
                lam: float, bootstrap: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for time-major arrays of shape (T,) or (T, S).

    ``terminals[t]`` marks that the episode ended after step t, so neither the
    next value nor later advantages leak across it.  ``bootstrap`` is the value
    of the state following the last step (ignored where that step is terminal).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    if not rewards.shape == values.shape == terminals.shape:
        raise ValueError("rewards, values and terminals must share a shape")
    T = rewards.shape[0]
    next_value = np.zeros(rewards.shape[1:]) if bootstrap is None else np.asarray(bootstrap, dtype=np.float64)
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        live = ~terminals[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, values + adv


class RunningStd:
    """Streaming variance (parallel Welford); scales intrinsic rewards."""

    def __init__(self, eps: float = 1e-8):
        self.mean = 0.0
        self.var = 1.0
        self.count = eps

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        bm, bv, bc = x.mean(), x.var(), x.size
        delta = bm - self.mean
        tot = self.count + bc
        self.mean += delta * bc / tot
        m2 = self.var * self.count + bv * bc + delta**2 * self.count * bc / tot
        self.var = m2 / tot
        self.count = tot

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))

    def state_dict(self) -> dict:
        return {"mean": self.mean, "var": self.var, "count": self.count}

    def load_state_dict(self, d: dict) -> None:
        self.mean, self.var, self.count = float(d["mean"]), float(d["var"]), float(d["count"])
