from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poolplay.netcore import NetSpec, PolicyValueNet, forward
from poolplay.rlalgos import (
    Batch, PpoConfig, RndConfig, RndLossWeights, RunningStd, Trainer, compute_gae, dual_clip_objective,
    dual_clip_policy_loss, mappo_policy_loss, masked_entropy, rnd_combined_advantage,
    rnd_intrinsic_reward, rnd_total_loss, total_loss, value_loss,
)
from poolplay.rlalgos.gradcheck import loss_gradient_check, make_net, random_batch
from poolplay.netcore import masked_log_softmax

finite = st.floats(-5, 5, allow_nan=False)
ratios = st.floats(1e-3, 20, allow_nan=False)


# ---------------------------------------------------------------- GAE

def test_gae_single_terminal_step():
    adv, ret = compute_gae([1.0], [0.0], [True], 0.99, 0.95)
    assert adv.tolist() == [1.0] and ret.tolist() == [1.0]


def test_gae_hand_unrolled():
    adv, ret = compute_gae([0.0, 1.0], [0.5, 0.5], [False, True], 1.0, 1.0)
    assert adv.tolist() == [0.5, 0.5]
    assert ret.tolist() == [1.0, 1.0]


def test_gae_zero_rewards_constant_value():
    c = 0.7
    adv, _ = compute_gae(np.zeros(5), np.full(5, c), [False] * 4 + [True], 1.0, 0.9)
    assert adv[-1] == pytest.approx(-c)


def test_gae_bootstrap_and_terminal_cut():
    # episode ends after step 0; step 1 bootstraps from the tail value
    adv, _ = compute_gae([1.0, 0.0], [0.0, 0.0], [True, False], 0.5, 1.0, bootstrap=np.array(2.0))
    assert adv.tolist() == [1.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_returns_minus_values_equal_advantages(T, seed):
    rng = np.random.default_rng(seed)
    r, v = rng.standard_normal((T, 3)), rng.standard_normal((T, 3))
    d = rng.random((T, 3)) < 0.2
    adv, ret = compute_gae(r, v, d, 0.99, 0.95, bootstrap=rng.standard_normal(3))
    assert np.array_equal(ret - v, adv) or np.allclose(ret - v, adv, atol=1e-12)


def test_gae_matches_loop_oracle():
    rng = np.random.default_rng(3)
    T = 20
    r, v, d = rng.standard_normal(T), rng.standard_normal(T), rng.random(T) < 0.2
    boot, g, lam = 0.3, 0.97, 0.9
    want = np.zeros(T)
    for t in range(T):
        total, coef = 0.0, 1.0
        for k in range(t, T):
            nv = 0.0 if d[k] else (v[k + 1] if k + 1 < T else boot)
            total += coef * (r[k] + g * nv - v[k])
            if d[k]:
                break
            coef *= g * lam
        want[t] = total
    adv, _ = compute_gae(r, v, d, g, lam, bootstrap=np.array(boot))
    np.testing.assert_allclose(adv, want, atol=1e-12)


def test_running_std_matches_numpy():
    rng = np.random.default_rng(0)
    xs = [rng.standard_normal(50) * 3 + 1 for _ in range(10)]
    rs = RunningStd()
    for x in xs:
        rs.update(x)
    assert rs.std == pytest.approx(np.concatenate(xs).std(), rel=1e-6)


# ---------------------------------------------------------------- policy loss

def test_dual_clip_identity_ratio():
    assert dual_clip_objective(1.0, 2.0).item() == -2.0


def test_dual_clip_upper_branch():
    assert dual_clip_objective(1.5, 1.0, 0.2, 3.0).item() == pytest.approx(-1.2)


def test_dual_clip_lower_branch():
    assert dual_clip_objective(5.0, -1.0, 0.2, 3.0).item() == pytest.approx(3.0)


@settings(max_examples=300, deadline=None)
@given(ratios, finite)
def test_clip_regions(r, a):
    obj = -dual_clip_objective(r, a, 0.2, 3.0).item()
    if a >= 0:
        assert obj <= 1.2 * a + 1e-12
    else:
        assert obj >= 3.0 * a - 1e-12


@settings(max_examples=300, deadline=None)
@given(ratios, finite)
def test_dual_clip_reduces_to_standard_clip(r, a):
    standard = -min(r * a, min(max(r, 0.8), 1.2) * a)
    if abs(r - 1) <= 0.2 or a >= 0:
        assert dual_clip_objective(r, a, 0.2, 3.0).item() == pytest.approx(standard, abs=1e-12)


def test_policy_loss_gradient_matches_differences():
    rng = np.random.default_rng(1)
    n = 200
    new, old, adv = rng.normal(-1, 0.5, n), rng.normal(-1, 0.5, n), rng.standard_normal(n)
    _, _, d = dual_clip_policy_loss(new, old, adv)
    h = 1e-6
    up = dual_clip_policy_loss(new + h, old, adv)[1]
    down = dual_clip_policy_loss(new - h, old, adv)[1]
    np.testing.assert_allclose(d, (up - down) / (2 * h), atol=1e-6)


# ---------------------------------------------------------------- value, RND, MAPPO

def test_value_loss_cases():
    assert value_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    assert value_loss([0.0, 0.0], [1.0, 3.0])[0] == 5.0
    rng = np.random.default_rng(0)
    v, g = rng.standard_normal(30), rng.standard_normal(30)
    assert value_loss(v, g)[0] == pytest.approx(sum((a - b) ** 2 for a, b in zip(v, g)) / 30)


def test_intrinsic_reward_cases():
    e = np.array([[0.3, -0.2, 0.9]])
    assert rnd_intrinsic_reward(e, e.copy()).tolist() == [0.0]
    assert rnd_intrinsic_reward(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).tolist() == [1.0]


def test_predictor_learns_a_repeated_state():
    net = make_net("rnd_ppo", embed=8, seed=3)
    obs = np.linspace(-1, 1, net.spec.obs_dim)[None].repeat(64, 0)
    before = forward(net, obs[:1], rnd=True).prediction_error[0]
    tr = Trainer(net, "rnd_ppo", PpoConfig(lr=1e-3, minibatch_size=64), RndConfig(embed_dim=8))
    batch = Batch(obs=obs, global_obs=None, mask=np.ones((64, net.spec.n_actions), bool),
                  actions=np.zeros(64, int), old_logp=np.full(64, -1.6), advantages=np.zeros(64),
                  returns=np.zeros(64), intrinsic_returns=np.zeros(64))
    for _ in range(50):
        tr.train_step(batch)
    after = forward(net, obs[:1], rnd=True).prediction_error[0]
    assert after < before


def test_combined_advantage():
    assert rnd_combined_advantage(np.array([1.0]), np.array([0.5]), 2, 8).tolist() == [6.0]
    ae = np.array([0.3, -1.2])
    assert rnd_combined_advantage(ae, np.array([4.0, 5.0]), 1.0, 0.0).tolist() == ae.tolist()
    assert rnd_combined_advantage(np.zeros(3), np.zeros(3)).tolist() == [0.0] * 3


def test_rnd_total_loss_weights():
    assert rnd_total_loss(0, 0, 0, 0) == 0.0
    w = RndLossWeights(policy=1.0, value=0.5, intrinsic_value=0.5, prediction=1.0)
    assert rnd_total_loss(1, 1, 1, 1, w) == 3.0


def test_mappo_loss_mean():
    assert mappo_policy_loss([2.0, 4.0]) == 3.0
    rng = np.random.default_rng(0)
    xs = rng.standard_normal(4).tolist()
    assert mappo_policy_loss(xs) == pytest.approx(sum(xs) / 4)
    with pytest.raises(ValueError):
        mappo_policy_loss([])


def test_mappo_single_player_equals_ppo():
    rng = np.random.default_rng(0)
    new, old, adv = rng.normal(-1, .4, 64), rng.normal(-1, .4, 64), rng.standard_normal(64)
    ppo = dual_clip_policy_loss(new, old, adv)[0]
    assert mappo_policy_loss([ppo]) == ppo


def test_mappo_weights_players_equally():
    net = make_net("mappo")
    rng = np.random.default_rng(2)
    b = random_batch(net, 30, rng)
    b.player = np.array([0] * 10 + [1] * 20)
    parts, _ = total_loss(net, b, "mappo", PpoConfig(), RndConfig(), 0.0)
    out = forward(net, b.obs, global_obs=b.global_obs)
    logp = masked_log_softmax(out.logits)[np.arange(30), b.actions]
    per = dual_clip_policy_loss(logp, b.old_logp, b.advantages)[1]
    assert parts.policy_loss == pytest.approx(mappo_policy_loss([per[:10].mean(), per[10:].mean()]))


def test_masked_entropy_gradient():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((4, 5))
    mask = np.array([[1, 1, 0, 1, 1]] * 4, bool)
    _, d = masked_entropy(masked_log_softmax(z, mask))
    h = 1e-6
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        up = masked_entropy(masked_log_softmax(z + e, mask))[0]
        down = masked_entropy(masked_log_softmax(z - e, mask))[0]
        np.testing.assert_allclose(d[:, j], (up - down) / (2 * h), atol=1e-7)


# ---------------------------------------------------------------- full-loss gradients

@pytest.mark.parametrize("algorithm", ["ppo", "rnd_ppo", "mappo"])
def test_total_loss_gradient_matches_differences(algorithm):
    rng = np.random.default_rng(5)
    for k in range(5):
        net = make_net(algorithm, seed=k)
        b = random_batch(net, 16, rng)
        assert loss_gradient_check(net, b, algorithm) < 1e-4


def test_rnd_policy_gradient_equals_ppo_when_intrinsic_off():
    rng = np.random.default_rng(4)
    ppo_net = make_net("ppo", seed=1)
    rnd_net = make_net("rnd_ppo", seed=2)
    for name in ("torso", "policy"):
        for e in ppo_net.space.specs:
            if e.name.startswith(name + "."):
                a, b, _ = ppo_net.space.offsets[e.name]
                c, d, _ = rnd_net.space.offsets[e.name]
                rnd_net.params[c:d] = ppo_net.params[a:b]
    rnd_net.touch()
    b = random_batch(ppo_net, 32, rng)
    ai = rng.standard_normal(32)
    rb = Batch(**{**b.__dict__, "advantages": rnd_combined_advantage(b.advantages, ai, 1.0, 0.0),
                  "intrinsic_returns": rng.standard_normal(32)})
    _, g1 = total_loss(ppo_net, b, "ppo", PpoConfig(), RndConfig(), 0.01)
    _, g2 = total_loss(rnd_net, rb, "rnd_ppo", PpoConfig(), RndConfig(), 0.01)
    for e in ppo_net.space.specs:
        if e.name.startswith("policy."):
            a, bb, _ = ppo_net.space.offsets[e.name]
            c, d, _ = rnd_net.space.offsets[e.name]
            assert np.array_equal(g1[a:bb], g2[c:d])


# ---------------------------------------------------------------- train step

def perfect_batch(net, n=64, seed=0):
    rng = np.random.default_rng(seed)
    b = random_batch(net, n, rng)
    out = forward(net, b.obs, global_obs=b.global_obs)
    b.advantages = np.zeros(n)
    b.returns = out.value.copy()
    b.old_logp = masked_log_softmax(out.logits)[np.arange(n), b.actions]
    return b


def test_only_entropy_moves_a_perfect_batch():
    net = make_net("ppo")
    b = perfect_batch(net)
    before = net.params.copy()
    Trainer(net, "ppo", PpoConfig(entropy_start=0.0, entropy_end=0.0, minibatch_size=64)).train_step(b)
    assert np.array_equal(net.params, before)
    Trainer(net, "ppo", PpoConfig(entropy_start=0.01, entropy_end=0.01, minibatch_size=64)).train_step(b)
    assert not np.array_equal(net.params, before)


def test_zero_learning_rate_keeps_losses():
    net = make_net("ppo")
    b = random_batch(net, 64, np.random.default_rng(0))
    before = net.params.copy()
    tr = Trainer(net, "ppo", PpoConfig(lr=0.0, minibatch_size=64))
    first = tr.train_step(b)
    second = tr.train_step(b)
    assert np.array_equal(net.params, before)
    # shuffled minibatch order only changes float summation order
    assert first.total == pytest.approx(second.total, rel=1e-12)


def test_train_step_deterministic():
    def run():
        net = make_net("mappo", seed=3)
        b = random_batch(net, 100, np.random.default_rng(9))
        tr = Trainer(net, "mappo", PpoConfig(minibatch_size=32), seed=4)
        for _ in range(3):
            tr.train_step(b)
        return net.params.copy()

    assert np.array_equal(run(), run())


def test_non_finite_batch_dropped():
    net = make_net("ppo")
    b = random_batch(net, 64, np.random.default_rng(0))
    b.returns[3] = np.nan
    tr = Trainer(net, "ppo", PpoConfig(minibatch_size=16))
    before = net.params.copy()
    assert tr.train_step(b) is None
    assert tr.dropped_batches == 1
    assert np.array_equal(net.params, before)


def test_rnd_target_frozen_through_training():
    net = make_net("rnd_ppo")
    target = net.target_params.copy()
    b = random_batch(net, 64, np.random.default_rng(0))
    tr = Trainer(net, "rnd_ppo", PpoConfig(lr=1e-2, minibatch_size=16))
    for _ in range(5):
        tr.train_step(b)
    assert np.array_equal(net.target_params, target)
    with pytest.raises(ValueError):
        net.target_params[0] = 1.0


def test_entropy_annealing_schedule():
    cfg = PpoConfig(entropy_start=0.01, entropy_end=0.001, entropy_anneal_iters=100)
    assert cfg.entropy_coef(0) == 0.01
    assert cfg.entropy_coef(50) == pytest.approx(0.0055)
    assert cfg.entropy_coef(500) == pytest.approx(0.001)


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(epsilon=0.2, eta=1.1)
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)
    with pytest.raises(ValueError):
        RndConfig(intrinsic_coef=-1)
    with pytest.raises(ValueError):
        Trainer(make_net("ppo"), "mappo")


def test_gradient_check_catches_planted_error(monkeypatch):
    from poolplay.rlalgos import gradcheck

    net = make_net("ppo", seed=0)
    batch = random_batch(net, 8, np.random.default_rng(0))
    real = gradcheck.total_loss

    def skewed(*args, **kwargs):
        parts, grad = real(*args, **kwargs)
        if grad is not None:
            grad = grad.copy()
            grad[5] *= 1.001
        return parts, grad

    monkeypatch.setattr(gradcheck, "total_loss", skewed)
    assert loss_gradient_check(net, batch, "ppo") > 1e-4


def test_gradient_check_steps_around_relu_kink():
    from poolplay.rlalgos.gradcheck import branch_signature
    from poolplay.rlalgos.trainer import PpoConfig, RndConfig, total_loss

    h = 1e-5
    net = make_net("ppo", seed=1)
    batch = random_batch(net, 8, np.random.default_rng(1))
    layer = net.nets["torso"].layers[0]
    # put sample 0's first hidden unit 0.3h above its kink
    layer.bias[0] = -(batch.obs[0] @ layer.weight[0]) + 0.3 * h
    net.touch()
    c = (layer.bias.__array_interface__["data"][0] - net.params.__array_interface__["data"][0]) // 8
    assert net.params[c] == layer.bias[0]
    base = branch_signature(net, batch, "ppo")
    net.params[c] -= h
    assert not np.array_equal(branch_signature(net, batch, "ppo"), base)
    net.params[c] += h
    net.touch()

    def loss():
        return total_loss(net, batch, "ppo", PpoConfig(), RndConfig(), 0.01, True, with_grad=False)[0].total

    grad = total_loss(net, batch, "ppo", PpoConfig(), RndConfig(), 0.01, True)[1][c]
    old = net.params[c]
    net.params[c] = old + h
    up = loss()
    net.params[c] = old - h
    down = loss()
    net.params[c] = old
    net.touch()
    central = (up - down) / (2 * h)
    assert abs(central - grad) / abs(grad) > 1e-4
    assert loss_gradient_check(net, batch, "ppo", coords=np.array([c])) < 1e-4
