from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from conftest import tiny
from poolplay.league import (
    ConfigError, League, RunError, build_net, config_from_dict, config_to_toml, load_config, main_settings_hash,
    transfer_parameters,
)
from poolplay.league.ablation import ARMS, TABLE1_ARMS, arm_config, run_ablation
from poolplay.modelpools import DMMP, DPMP, LHMP, MAIN, METHOD_EXPLORER, POLICY_EXPLORER, SHMP, registries_equal
from poolplay.netcore import policy_logits


# ---------------------------------------------------------------- config

def test_defaults_validate_and_shares_sum_to_one():
    for profile in ("desk", "paper"):
        cfg = config_from_dict({"profile": profile})
        assert sum(cfg.shares.values()) == pytest.approx(1.0)
        assert 0.0 <= cfg.scenario_mix <= 1.0
        assert [a.kind for a in cfg.agents].count(POLICY_EXPLORER) == 3
        assert sorted(a.algorithm for a in cfg.agents if a.kind == METHOD_EXPLORER) == ["mappo", "rnd_ppo"]


def test_full_scale_profile_keeps_reference_values():
    cfg = config_from_dict({"profile": "paper"})
    ppo = cfg.ppo
    assert (ppo.batch_size, ppo.epsilon, ppo.eta, ppo.max_grad_norm) == (80_000, 0.2, 3.0, 10.0)
    assert (ppo.gamma, ppo.lam, ppo.lr, ppo.beta1, ppo.beta2) == (0.9995, 0.95, 5e-5, 0.99, 0.999)
    assert (cfg.matchmaking.alpha, cfg.matchmaking.temperature, cfg.pools.shmp_capacity) == (0.6, 0.3, 100)
    assert (cfg.rnd.intrinsic_gamma, cfg.rnd.intrinsic_coef, cfg.rnd.extrinsic_coef) == (0.99, 8.0, 2.0)
    main = cfg.agent("main")
    assert (main.entropy_start, main.entropy_end) == (0.01, 0.001)
    assert cfg.sync_every == 2000


@pytest.mark.parametrize("data, field", [
    ({"shares": {"main": 0.5, "policy_explorer": 0.3, "method_explorer": 0.3}}, "shares"),
    ({"scenario_mix": 1.5}, "scenario_mix"),
    ({"ppo": {"bogus": 1}}, "ppo.bogus"),
    ({"ppo": {"lr": "fast"}}, "ppo.lr"),
    ({"matchmaking": {"mode": "greedy"}}, "matchmaking"),
    ({"profile": "cluster"}, "profile"),
    ({"pools": {"enabled": ["SHMP", "XMP"]}}, "pools.enabled"),
])
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as err:
        config_from_dict(data)
    assert str(err.value).startswith(field)


def test_agent_rules():
    base = [dataclasses.asdict(a) for a in config_from_dict({}).agents]
    bad = [dict(base[0], variant="goal_clip")] + base[1:]
    with pytest.raises(ConfigError, match="agents"):
        config_from_dict({"agents": bad})
    bad = base[:1] + [dict(base[1], algorithm="mappo")] + base[2:]
    with pytest.raises(ConfigError, match="policy explorer"):
        config_from_dict({"agents": bad})


def test_toml_round_trip(tmp_path):
    for cfg in (config_from_dict({"profile": "desk"}), config_from_dict({"profile": "paper"}), tiny()):
        path = tmp_path / "c.toml"
        path.write_text(config_to_toml(cfg))
        assert load_config(path) == cfg


def test_shipped_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "desk.toml") == config_from_dict({"profile": "desk"})
    assert load_config(root / "paper.toml") == config_from_dict({"profile": "paper"})


# ---------------------------------------------------------------- runs

def test_duration_zero(tmp_path):
    league = League(tiny(), tmp_path / "run")
    manifest = league.run(steps=0)
    assert manifest["step"] == 0
    assert all(a["iteration"] == 0 for a in manifest["agents"].values())
    assert all(n == 0 for n in league.registry.sizes().values())
    assert (tmp_path / "run" / "run.json").exists()


def test_fixed_seed_runs_write_identical_metrics(tmp_path):
    for name in ("a", "b"):
        League(tiny(), tmp_path / name).run(steps=14)
    a = (tmp_path / "a" / "metrics.csv").read_text()
    assert a == (tmp_path / "b" / "metrics.csv").read_text()
    assert len(a.splitlines()) == 15
    assert (tmp_path / "a" / "elo.csv").read_text() == (tmp_path / "b" / "elo.csv").read_text()


def test_resume_restores_pools_and_pair_stats(tmp_path):
    league = League(tiny(), tmp_path / "run")
    league.run(steps=12)
    back = League(None, tmp_path / "run", resume=True)
    assert registries_equal(league.registry, back.registry)
    for name, agent in league.agents.items():
        other = back.agents[name]
        assert other.stats.state_dict() == agent.stats.state_dict()
        assert other.iteration == agent.iteration and other.samples == agent.samples
        assert np.array_equal(other.net.params, agent.net.params)
    assert back.step_count == 12
    back.run(steps=2)
    assert back.step_count == 14


def test_resume_refuses_changed_main_settings(tmp_path):
    import json

    League(tiny(), tmp_path / "run").run(steps=1)
    path = tmp_path / "run" / "run.json"
    manifest = json.loads(path.read_text())
    manifest["config"]["ppo"]["lr"] = 1.0
    path.write_text(json.dumps(manifest))
    with pytest.raises(RunError, match="main-agent settings"):
        League(None, tmp_path / "run", resume=True)


def test_main_settings_hash_unchanged_over_run(tmp_path):
    cfg = tiny()
    league = League(cfg, tmp_path / "run")
    before = main_settings_hash(league.config)
    manifest = league.run(steps=8)
    assert manifest["main_settings_hash"] == before == main_settings_hash(cfg)


def test_resource_shares(tmp_path):
    cfg = tiny(shares={"main": 0.5, "policy_explorer": 0.25, "method_explorer": 0.25})
    league = League(cfg, tmp_path / "run")
    league.run(steps=48)
    by_kind = {}
    for a in league.agents.values():
        by_kind[a.kind] = by_kind.get(a.kind, 0) + a.samples
    total = sum(by_kind.values())
    for kind, share in cfg.shares.items():
        assert abs(by_kind[kind] / total - share) <= 0.05


def test_pool_cadences_and_routing(tmp_path):
    league = League(tiny(), tmp_path / "run")
    league.run(steps=36)
    reg = league.registry
    main = league.agents["main"]
    assert len(reg.pool("main", SHMP)) == main.iteration // 2 + (main.iteration % 2 != 0)
    assert len(reg.pool("main", LHMP)) >= 2
    kinds = {reg.checkpoints[c].agent_kind for c in reg.pool("shared", DPMP).entries}
    assert METHOD_EXPLORER not in kinds and kinds
    assert reg.pool("shared", DMMP).entries


# ---------------------------------------------------------------- explorer sync

def _obs(league, dim, n=5):
    return np.random.default_rng(0).normal(size=(n, dim))


def test_sync_goal_clip_gives_identical_distributions(tmp_path):
    league = League(tiny(), tmp_path / "run")
    league.run(steps=6)
    main, pe = league.agents["main"], league.agents["pe_goalclip"]
    assert not np.array_equal(main.net.params, pe.net.params)
    league.sync_explorers()
    x = _obs(league, main.net.spec.obs_dim)
    np.testing.assert_array_equal(main.policy.log_probs(x, np.ones((5, 19), bool)),
                                  pe.policy.log_probs(x, np.ones((5, 19), bool)))
    assert pe.cfg.variant == "goal_clip" and pe.obs_config.goal_clip
    assert pe.trainer.adam.step_count == 0


def test_sync_history_zero_padding_gives_identical_logits(tmp_path):
    league = League(tiny(), tmp_path / "run")
    league.run(steps=6)
    main, pe = league.agents["main"], league.agents["pe_history"]
    league.sync_explorers()
    x = _obs(league, main.net.spec.obs_dim)
    padded = np.concatenate([x, np.zeros((len(x), pe.net.spec.obs_dim - x.shape[1]))], axis=1)
    assert pe.net.spec.obs_dim == 3 * x.shape[1]
    np.testing.assert_array_equal(policy_logits(main.net, x), policy_logits(pe.net, padded))


def test_method_explorers_never_sync(tmp_path):
    league = League(tiny(), tmp_path / "run")
    league.run(steps=6)
    before = {n: a.net.params.copy() for n, a in league.agents.items() if a.kind == METHOD_EXPLORER}
    synced = league.sync_explorers()
    assert set(synced) == {"pe_history", "pe_goalclip", "pe_possession"}
    for n, p in before.items():
        assert np.array_equal(league.agents[n].net.params, p)


def test_transfer_skips_mismatched_heads():
    cfg = tiny()
    main = build_net(cfg.agent("main"), cfg, 0)
    mappo = build_net(cfg.agent("me_mappo"), cfg, 1)
    copied = transfer_parameters(main, mappo)
    assert "policy.2" in copied and "torso.0" in copied
    assert not any(n.startswith("vtorso") for n in copied)  # centralized critic input has no counterpart
    x = np.random.default_rng(1).normal(size=(4, main.spec.obs_dim))
    np.testing.assert_array_equal(policy_logits(main, x), policy_logits(mappo, x))


# ---------------------------------------------------------------- faults

def test_rollback_after_dropped_batches(tmp_path):
    league = League(tiny(rollback_after=3), tmp_path / "run")
    league.run(steps=6)
    main = league.agents["main"]
    saved = league.registry.load_net(main.last_checkpoint).params.copy()
    main.trainer.train_step = lambda batch: None
    main.net.set_params(np.full_like(main.net.params, np.nan))
    while main.rollbacks == 0:
        league.step()
    assert np.array_equal(main.net.params, saved)
    assert main.streak == 0


def test_worker_crash_discards_episode_and_continues(tmp_path):
    calls = {"n": 0}

    def hook(env_index, steps):
        calls["n"] += 1
        if calls["n"] % 50 == 0:
            raise RuntimeError("worker died")

    league = League(tiny(), tmp_path / "run", fault_hook=hook)
    league.run(steps=6)
    crashes = sum(a.collector.crashes for a in league.agents.values())
    assert crashes > 0
    assert league.step_count == 6
    assert all(np.isfinite(a.net.params).all() for a in league.agents.values())


def test_builtin_ai_flag_brings_scripted_opponents(tmp_path):
    off = League(tiny(), tmp_path / "off")
    assert sum(off.step()["vs_scripted"] for _ in range(6)) == 0
    on = League(tiny(builtin_ai=1.0, seg_len=200), tmp_path / "on")
    rows = [on.step() for _ in range(6)]
    assert sum(r["vs_scripted"] for r in rows) > 0


def test_garbage_collect_keeps_live_checkpoints(tmp_path):
    cfg = tiny(pools={"shmp_capacity": 2, "lhmp_interval": 1000}, evaluation={"screen_every": 1000})
    league = League(cfg, tmp_path / "run")
    league.run(steps=24)
    removed = league.garbage_collect()
    assert removed
    reg = league.registry
    live = reg.referenced() | {a.last_checkpoint for a in league.agents.values()}
    for cid in live | {f"{n}-000000" for n in league.agents}:
        assert reg.payload_path(cid).exists()
    for cid in removed:
        assert not reg.payload_path(cid).exists()


# ---------------------------------------------------------------- ablation

def test_arm_configs():
    base = tiny()
    assert set(TABLE1_ARMS) <= set(ARMS)
    full = arm_config(base, "original")
    assert len(full.agents) == 6
    solo = arm_config(base, "ablation5")
    assert [a.kind for a in solo.agents] == [MAIN] and solo.pools.enabled == ()
    assert arm_config(base, "ablation2").shares == {MAIN: 1.0}
    rnd = arm_config(base, "random_sampling")
    assert rnd.matchmaking.mode == "uniform" and rnd.matchmaking.alpha == base.matchmaking.alpha
    assert arm_config(base, "action_mask").agent("main").use_mask
    assert arm_config(base, "builtin_ai").builtin_ai > 0
    assert arm_config(base, "no_sst").scenario_mix == 0
    with pytest.raises(ValueError):
        arm_config(base, "nope")


def test_ablation_shares_start_and_budget(tmp_path):
    base = tiny()
    start = build_net(base.agent("main"), base, 99)
    table, results = run_ablation(base, ["ablation4", "ablation5"], tmp_path, main_iterations=2, start=start,
                                  games_per_pair=2)
    assert [r.main_iterations for r in results] == [2, 2]
    for r in results:
        first = League(None, tmp_path / r.arm, resume=True).registry.load_net("main-000000")
        assert np.array_equal(first.params, start.params)
    assert (tmp_path / "ablation.csv").exists()
    assert sum(table.rating(r.arm) for r in results) == pytest.approx(2 * 1000.0)
