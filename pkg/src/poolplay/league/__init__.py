from .agent import LeagueAgent, build_net, transfer_parameters
from .config import (
    AgentConfig, ConfigError, EvalSettings, LeagueConfig, PoolSettings, config_from_dict, config_to_toml,
    default_agents, load_config,
)
from .orchestrator import League, PoolView, RunError, main_settings_hash

__all__ = [
    "LeagueAgent", "build_net", "transfer_parameters", "AgentConfig", "ConfigError", "EvalSettings",
    "LeagueConfig", "PoolSettings", "config_from_dict", "config_to_toml", "default_agents", "load_config",
    "League", "PoolView", "RunError", "main_settings_hash",
]
