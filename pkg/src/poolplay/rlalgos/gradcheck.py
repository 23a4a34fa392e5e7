"""Central finite-difference checks of the full training losses."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..netcore import NetSpec, PolicyValueNet, forward, masked_log_softmax
from .trainer import Batch, PpoConfig, RndConfig, total_loss


def make_net(algorithm: str, obs_dim: int = 6, n_actions: int = 5, torso: int = 7, head: int = 5,
             global_dim: int = 9, embed: int = 4, seed: int = 0) -> PolicyValueNet:
    spec = NetSpec(obs_dim, n_actions, torso, head,
                   global_obs_dim=global_dim if algorithm == "mappo" else None,
                   rnd_embed_dim=embed if algorithm == "rnd_ppo" else None)
    return PolicyValueNet(spec, seed=seed)


def random_batch(net: PolicyValueNet, n: int, rng: np.random.Generator, n_players: int = 2) -> Batch:
    spec = net.spec
    mask = rng.random((n, spec.n_actions)) < 0.7
    mask[np.arange(n), rng.integers(0, spec.n_actions, n)] = True
    actions = np.array([rng.choice(np.flatnonzero(m)) for m in mask])
    return Batch(
        obs=rng.uniform(-1, 1, (n, spec.obs_dim)),
        global_obs=rng.uniform(-1, 1, (n, spec.global_obs_dim)) if spec.mappo else None,
        mask=mask,
        actions=actions,
        old_logp=np.log(rng.uniform(0.05, 0.6, n)),
        advantages=rng.standard_normal(n),
        returns=rng.standard_normal(n),
        intrinsic_returns=rng.standard_normal(n) if spec.rnd else None,
        player=rng.integers(0, n_players, n),
    )


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor) per component."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def branch_signature(net: PolicyValueNet, batch: Batch, algorithm: str, ppo: PpoConfig = PpoConfig(),
                     use_mask: bool = True) -> np.ndarray:
    """Which side of every kink the loss sits on: leaky-ReLU signs and dual-clip branches."""
    out = forward(net, batch.obs, global_obs=batch.global_obs, rnd=algorithm == "rnd_ppo")
    bits = [z > 0 for caches in out.trace.caches.values() for _, z in caches]
    logp = masked_log_softmax(out.logits, batch.mask if use_mask else None)
    ratio = np.exp(logp[np.arange(len(batch)), batch.actions] - batch.old_logp)
    adv = batch.advantages
    clipped = np.clip(ratio, 1.0 - ppo.epsilon, 1.0 + ppo.epsilon)
    bits += [ratio <= 1.0 - ppo.epsilon, ratio >= 1.0 + ppo.epsilon,
             (adv < 0) & (np.minimum(ratio * adv, clipped * adv) < ppo.eta * adv)]
    return np.concatenate([b.ravel() for b in bits])


def loss_gradient_check(net: PolicyValueNet, batch: Batch, algorithm: str, entropy_coef: float = 0.01,
                        use_mask: bool = True, h: float = 1e-5, coords: Optional[np.ndarray] = None,
                        ppo: PpoConfig = PpoConfig(), rnd: RndConfig = RndConfig(),
                        tol: float = 1e-4) -> float:
    """Largest relative error between backprop and finite differences over ``coords``.

    The loss is piecewise smooth. A coordinate whose central stencil straddles a kink is
    re-estimated with a second-order one-sided stencil on the side that stays in the
    current branch, shrinking the step until one exists. Coordinates without a kink
    keep their central-difference error.
    """
    _, grad = total_loss(net, batch, algorithm, ppo, rnd, entropy_coef, use_mask)
    if coords is None:
        coords = np.arange(net.params.size)

    def loss_at(c: int, x: float) -> float:
        net.params[c] = x
        return total_loss(net, batch, algorithm, ppo, rnd, entropy_coef, use_mask, with_grad=False)[0].total

    def signature_at(c: int, x: float) -> np.ndarray:
        net.params[c] = x
        return branch_signature(net, batch, algorithm, ppo, use_mask)

    base = branch_signature(net, batch, algorithm, ppo, use_mask)
    f0 = total_loss(net, batch, algorithm, ppo, rnd, entropy_coef, use_mask, with_grad=False)[0].total
    errs = np.zeros(len(coords))
    for k, c in enumerate(coords):
        old = net.params[c]
        numeric = (loss_at(c, old + h) - loss_at(c, old - h)) / (2 * h)
        err = relative_errors(grad[c:c + 1], np.array([numeric]))[0]
        step = h
        while err >= tol and step >= h * 1e-3:
            same = {s: all(np.array_equal(signature_at(c, old + s * j * step), base) for j in (1, 2))
                    for s in (1, -1)}
            if same[1] and same[-1]:
                break  # no kink inside the stencil: the error stands
            for s in (1, -1):
                if same[s]:
                    one_sided = s * (-3 * f0 + 4 * loss_at(c, old + s * step) - loss_at(c, old + 2 * s * step))
                    err = min(err, relative_errors(grad[c:c + 1], np.array([one_sided / (2 * step)]))[0])
            step /= 10
        net.params[c] = old
        errs[k] = err
    net.touch()
    return float(errs.max())
