"""League configuration: dataclasses, TOML loading with profiles, field-level errors."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import tomli

from ..football.state import EnvConfig
from ..matchmaking import MatchmakingConfig
from ..modelpools import AGENT_KINDS, MAIN, METHOD_EXPLORER, POLICY_EXPLORER, POOL_KINDS
from ..rlalgos import ALGORITHMS, PpoConfig, RndConfig
from ..rlalgos.losses import RndLossWeights

PROFILES = ("desk", "paper")
VARIANTS = ("none", "history_input", "goal_clip", "possession_reward")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class AgentConfig:
    name: str
    kind: str = MAIN
    algorithm: str = "ppo"
    variant: str = "none"
    history_depth: int = 0
    use_mask: bool = False
    entropy_start: Optional[float] = None  # None: take the league's PPO setting
    entropy_end: Optional[float] = None

    def validate(self, path: str) -> None:
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"{path}.kind: must be one of {AGENT_KINDS}, got {self.kind!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"{path}.algorithm: must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"{path}.variant: must be one of {VARIANTS}, got {self.variant!r}")
        if self.kind == MAIN and (self.variant != "none" or self.algorithm != "ppo"):
            raise ConfigError(f"{path}: the main agent uses plain ppo without a variant")
        if self.kind == POLICY_EXPLORER and (self.variant == "none" or self.algorithm != "ppo"):
            raise ConfigError(f"{path}: a policy explorer needs exactly one variant and algorithm ppo")
        if self.kind == METHOD_EXPLORER and (self.algorithm == "ppo" or self.variant != "none"):
            raise ConfigError(f"{path}: a method explorer needs algorithm rnd_ppo or mappo and no variant")
        if (self.variant == "history_input") != (self.history_depth > 0):
            raise ConfigError(f"{path}.history_depth: positive exactly for the history_input variant")

    @property
    def goal_clip(self) -> bool:
        return self.variant == "goal_clip"

    @property
    def hold_ball(self) -> bool:
        return self.variant == "possession_reward"


@dataclass(frozen=True)
class PoolSettings:
    shmp_capacity: int = 100
    shmp_every: int = 20  # training iterations between SHMP pushes
    lhmp_interval: float = 200
    lhmp_unit: str = "iterations"  # or "seconds" (wall clock)
    enabled: tuple[str, ...] = POOL_KINDS


@dataclass(frozen=True)
class EvalSettings:
    screen_every: int = 100  # agent iterations between screenings
    games_per_pair: int = 6
    window: int = 10
    top_pool_every: int = 0  # 0 disables top-pool merging during training


@dataclass(frozen=True)
class LeagueConfig:
    profile: str = "desk"
    seed: int = 0
    env: EnvConfig = EnvConfig()
    ppo: PpoConfig = PpoConfig()
    rnd: RndConfig = RndConfig()
    matchmaking: MatchmakingConfig = MatchmakingConfig()
    pools: PoolSettings = PoolSettings()
    evaluation: EvalSettings = EvalSettings()
    agents: tuple[AgentConfig, ...] = ()
    shares: dict = field(default_factory=lambda: {MAIN: 1 / 3, POLICY_EXPLORER: 1 / 3, METHOD_EXPLORER: 1 / 3})
    n_envs: int = 16
    seg_len: int = 128
    torso_width: int = 256
    head_width: int = 128
    scenario_mix: float = 0.25
    builtin_ai: float = 0.0  # probability of a scripted opponent
    sync_every: int = 2000  # main-agent iterations between policy-explorer syncs
    rollback_after: int = 3  # consecutive dropped batches before rollback

    def validate(self) -> "LeagueConfig":
        if self.profile not in PROFILES:
            raise ConfigError(f"profile: must be one of {PROFILES}, got {self.profile!r}")
        if not self.agents:
            raise ConfigError("agents: at least one agent is required")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError("agents: names must be unique")
        if sum(a.kind == MAIN for a in self.agents) != 1:
            raise ConfigError("agents: exactly one main agent is required")
        for i, a in enumerate(self.agents):
            a.validate(f"agents[{i}]")
        kinds = {a.kind for a in self.agents}
        for k in kinds:
            if self.shares.get(k, 0) <= 0:
                raise ConfigError(f"shares.{k}: must be positive for a configured agent kind")
        unknown = set(self.shares) - set(AGENT_KINDS)
        if unknown:
            raise ConfigError(f"shares.{sorted(unknown)[0]}: unknown agent kind")
        total = sum(self.shares.get(k, 0) for k in kinds)
        if abs(total - 1) > 1e-6:
            raise ConfigError(f"shares: must sum to 1 over configured kinds, got {total:.6f}")
        if not 0 <= self.scenario_mix <= 1:
            raise ConfigError("scenario_mix: must lie in [0, 1]")
        if not 0 <= self.builtin_ai <= 1:
            raise ConfigError("builtin_ai: must lie in [0, 1]")
        for name, v in (("n_envs", self.n_envs), ("seg_len", self.seg_len), ("sync_every", self.sync_every),
                        ("pools.shmp_every", self.pools.shmp_every), ("pools.shmp_capacity", self.pools.shmp_capacity),
                        ("evaluation.screen_every", self.evaluation.screen_every),
                        ("evaluation.games_per_pair", self.evaluation.games_per_pair)):
            if v <= 0:
                raise ConfigError(f"{name}: must be positive")
        if self.pools.lhmp_unit not in ("iterations", "seconds"):
            raise ConfigError("pools.lhmp_unit: must be 'iterations' or 'seconds'")
        bad = set(self.pools.enabled) - set(POOL_KINDS)
        if bad:
            raise ConfigError(f"pools.enabled: unknown pool kind {sorted(bad)[0]!r}")
        return self

    def agent(self, name: str) -> AgentConfig:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def agent_ppo(self, agent: AgentConfig) -> PpoConfig:
        """League PPO settings with the agent's entropy schedule applied."""
        kw = {}
        if agent.entropy_start is not None:
            kw["entropy_start"] = agent.entropy_start
        if agent.entropy_end is not None:
            kw["entropy_end"] = agent.entropy_end
        return dataclasses.replace(self.ppo, **kw) if kw else self.ppo

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def default_agents(main_entropy: tuple[float, float] = (0.01, 0.001)) -> tuple[AgentConfig, ...]:
    """Main agent, three policy explorers and two method explorers."""
    return (
        AgentConfig("main", MAIN, entropy_start=main_entropy[0], entropy_end=main_entropy[1]),
        AgentConfig("pe_history", POLICY_EXPLORER, variant="history_input", history_depth=2,
                    entropy_start=0.01, entropy_end=0.01),
        AgentConfig("pe_goalclip", POLICY_EXPLORER, variant="goal_clip", entropy_start=0.01, entropy_end=0.01),
        AgentConfig("pe_possession", POLICY_EXPLORER, variant="possession_reward",
                    entropy_start=0.01, entropy_end=0.01),
        AgentConfig("me_rnd", METHOD_EXPLORER, algorithm="rnd_ppo", entropy_start=0.01, entropy_end=0.01),
        AgentConfig("me_mappo", METHOD_EXPLORER, algorithm="mappo", entropy_start=0.01, entropy_end=0.01),
    )


def profile_defaults(profile: str) -> dict:
    """Nested dict of a profile's settings before user overrides."""
    if profile == "paper":
        return {
            "profile": "paper",
            "ppo": {"batch_size": 80_000, "lr": 5e-5, "entropy_anneal_iters": 100_000},
            "pools": {"lhmp_interval": 12 * 3600, "lhmp_unit": "seconds"},
            "n_envs": 320,
            "seg_len": 128,
        }
    if profile == "desk":
        return {
            "profile": "desk",
            "ppo": {"batch_size": 4096, "lr": 3e-4, "entropy_anneal_iters": 3000},
            "pools": {"lhmp_interval": 200, "lhmp_unit": "iterations"},
            "evaluation": {"screen_every": 100, "games_per_pair": 6},
            "n_envs": 16,
            "seg_len": 128,
            "torso_width": 256,
            "head_width": 128,
            "sync_every": 500,
        }
    raise ConfigError(f"profile: must be one of {PROFILES}, got {profile!r}")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _coerce(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table")
        return build(tp, value, path)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        elem = args[0]
        return tuple(_coerce(elem, v, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table")
        return {k: _coerce(float, v, f"{path}.{k}") for k, v in value.items()}
    return value


def build(cls: type, data: dict, path: str = "") -> Any:
    """Instantiate dataclass ``cls`` from a nested dict, naming the bad field on error."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    kw = {}
    for k, v in data.items():
        fp = f"{path}.{k}" if path else k
        if k not in names:
            raise ConfigError(f"{fp}: unknown field")
        kw[k] = _coerce(hints[k], v, fp)
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or cls.__name__}: {e}") from None


def config_from_dict(data: dict) -> LeagueConfig:
    profile = data.get("profile", "desk")
    merged = _merge(profile_defaults(profile), data)
    if "agents" not in merged:
        merged["agents"] = [dataclasses.asdict(a) for a in default_agents()]
    if "rnd" in merged and "weights" in merged["rnd"]:
        merged["rnd"] = dict(merged["rnd"])
        merged["rnd"]["weights"] = dataclasses.asdict(build(RndLossWeights, merged["rnd"]["weights"], "rnd.weights"))
    return build(LeagueConfig, merged).validate()


def load_config(path: Union[str, os.PathLike]) -> LeagueConfig:
    p = Path(path)
    try:
        data = tomli.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{p}: no such config file") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None
    return config_from_dict(data)


def config_to_toml(cfg: LeagueConfig) -> str:
    """Minimal TOML writer for the plain values a config holds."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    d = cfg.to_dict()
    lines, tables = [], []
    for k, v in d.items():
        if k == "agents":
            continue
        if isinstance(v, dict):
            tables.append((k, v))
        elif v is not None:
            lines.append(f"{k} = {fmt(v)}")
    for name, tbl in tables:
        lines.append(f"\n[{name}]")
        sub = []
        for k, v in tbl.items():
            if isinstance(v, dict):
                sub.append((f"{name}.{k}", v))
            elif v is not None:
                lines.append(f"{k} = {fmt(v)}")
        for sname, stbl in sub:
            lines.append(f"\n[{sname}]")
            lines.extend(f"{k} = {fmt(v)}" for k, v in stbl.items() if v is not None)
    for a in d["agents"]:
        lines.append("\n[[agents]]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in a.items() if v is not None)
    return "\n".join(lines) + "\n"
