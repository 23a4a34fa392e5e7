"""Checkpoint records and their binary file format.

File layout (all little-endian)::

    b"PPCKPT" | u16 format version | u32 header length | JSON header | float64 params | float64 target

The header carries agent kind, algorithm tag, training step, creation index,
network spec and the per-layer layout; parameters follow in layer
declaration order.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .netcore import NetSpec, PolicyValueNet

MAGIC = b"PPCKPT"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ObsConfig:
    """How a checkpoint's policy expects to be fed."""

    history_depth: int = 0
    use_mask: bool = False
    goal_clip: bool = False


@dataclass
class Checkpoint:
    checkpoint_id: str
    agent: str
    agent_kind: str
    algorithm: str
    training_step: int
    creation_index: int
    net_spec: NetSpec
    obs_config: ObsConfig = ObsConfig()
    provenance: list[str] = field(default_factory=list)

    def meta(self) -> dict:
        d = {
            "checkpoint_id": self.checkpoint_id,
            "agent": self.agent,
            "agent_kind": self.agent_kind,
            "algorithm": self.algorithm,
            "training_step": self.training_step,
            "creation_index": self.creation_index,
            "net_spec": self.net_spec.to_dict(),
            "obs_config": asdict(self.obs_config),
            "provenance": list(self.provenance),
        }
        return d

    @classmethod
    def from_meta(cls, d: dict) -> "Checkpoint":
        return cls(
            checkpoint_id=d["checkpoint_id"],
            agent=d["agent"],
            agent_kind=d["agent_kind"],
            algorithm=d["algorithm"],
            training_step=int(d["training_step"]),
            creation_index=int(d["creation_index"]),
            net_spec=NetSpec(**d["net_spec"]),
            obs_config=ObsConfig(**d.get("obs_config", {})),
            provenance=list(d.get("provenance", [])),
        )


def write_checkpoint(path: os.PathLike, ckpt: Checkpoint, net: PolicyValueNet) -> None:
    """Atomically write ``net`` under ``ckpt``'s metadata (rename-on-complete)."""
    header = ckpt.meta()
    header["format_version"] = FORMAT_VERSION
    header["layout"] = net.layout()
    header["n_params"] = int(net.params.size)
    header["n_target"] = 0 if net.target_params is None else int(net.target_params.size)
    hbytes = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".ckpt")
    with os.fdopen(fd, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        f.write(net.params.astype("<f8").tobytes())
        if net.target_params is not None:
            f.write(net.target_params.astype("<f8").tobytes())
    os.replace(tmp, path)


def read_checkpoint(path: os.PathLike) -> tuple[Checkpoint, PolicyValueNet]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<HI", data, off)
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    off += 6
    try:
        header = json.loads(data[off: off + hlen])
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"{path}: corrupt header ({e})") from None
    off += hlen
    n, nt = header["n_params"], header["n_target"]
    if len(data) != off + 8 * (n + nt):
        raise CheckpointFormatError(f"{path}: truncated payload")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
    target: Optional[np.ndarray] = None
    if nt:
        target = np.frombuffer(data, dtype="<f8", count=nt, offset=off + 8 * n).astype(np.float64)
    ckpt = Checkpoint.from_meta(header)
    net = PolicyValueNet(ckpt.net_spec, params=params, target=target)
    return ckpt, net
