from __future__ import annotations

import pytest

from poolplay.league import config_from_dict

TINY = {
    "seed": 3,
    "n_envs": 2,
    "seg_len": 16,
    "torso_width": 16,
    "head_width": 8,
    "ppo": {"batch_size": 64, "minibatch_size": 32},
    "pools": {"shmp_every": 2, "lhmp_interval": 4},
    "evaluation": {"screen_every": 4, "games_per_pair": 1, "window": 4},
    "sync_every": 4,
}

TINY_TOML = """\
profile = "desk"
seed = 3
n_envs = 2
seg_len = 16
torso_width = 16
head_width = 8
sync_every = 4

[ppo]
batch_size = 64
minibatch_size = 32

[pools]
shmp_every = 2
lhmp_interval = 4

[evaluation]
screen_every = 4
games_per_pair = 1
window = 4
"""


def tiny(**over):
    """Full league at toy size: every code path, seconds per run."""
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()}
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(data.get(k), dict):
            data[k].update(v)
        else:
            data[k] = v
    return config_from_dict(data)


@pytest.fixture
def tiny_toml(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML)
    return path
