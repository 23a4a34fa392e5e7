"""History model pools: per-agent SHMP/LHMP/SMP plus the shared DPMP and DMMP.

The registry owns checkpoint metadata and payloads.  Pool entries are stored
as tuples and swapped under a lock, so readers always see a whole snapshot.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .checkpoint import Checkpoint, CheckpointFormatError, ObsConfig, read_checkpoint, write_checkpoint
from .netcore import PolicyValueNet

log = logging.getLogger(__name__)

SHMP, LHMP, SMP, DPMP, DMMP = "SHMP", "LHMP", "SMP", "DPMP", "DMMP"
POOL_KINDS = (SHMP, LHMP, SMP, DPMP, DMMP)
PRIVATE_KINDS = (SHMP, LHMP, SMP)
SHARED = "shared"

MAIN, POLICY_EXPLORER, METHOD_EXPLORER = "main", "policy_explorer", "method_explorer"
AGENT_KINDS = (MAIN, POLICY_EXPLORER, METHOD_EXPLORER)

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1
DEFAULT_SHMP_CAPACITY = 100


class PoolError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Certificate:
    """Proof that screening selected a checkpoint; only the registry mints these."""

    checkpoint_id: str
    serial: int
    elo: float = 0.0


class HistoryModelPool:
    def __init__(self, kind: str, owner: str, capacity: Optional[int] = None):
        if kind not in POOL_KINDS:
            raise PoolError(f"unknown pool kind {kind!r}")
        if capacity is not None and capacity < 1:
            raise PoolError("capacity must be positive")
        self.kind = kind
        self.owner = owner
        self.capacity = capacity
        self.entries: tuple[str, ...] = ()
        self.evicted_total = 0

    @property
    def name(self) -> str:
        return f"{self.owner}/{self.kind}"

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, cid: str) -> bool:
        return cid in self.entries

    def _append(self, cid: str) -> Optional[str]:
        entries = self.entries + (cid,)
        evicted = None
        if self.capacity is not None and len(entries) > self.capacity:
            evicted, entries = entries[0], entries[1:]
            self.evicted_total += 1
        self.entries = entries
        return evicted

    def to_dict(self) -> dict:
        return {"kind": self.kind, "owner": self.owner, "capacity": self.capacity,
                "entries": list(self.entries), "evicted_total": self.evicted_total}

    @classmethod
    def from_dict(cls, d: dict) -> "HistoryModelPool":
        p = cls(d["kind"], d["owner"], d.get("capacity"))
        p.entries = tuple(d["entries"])
        p.evicted_total = int(d.get("evicted_total", 0))
        return p


@dataclass
class AgentRecord:
    name: str
    kind: str
    next_index: int = 0
    last_long_term: Optional[float] = None


@dataclass
class AuditRecord:
    action: str
    checkpoint_id: str
    agent: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"action": self.action, "checkpoint_id": self.checkpoint_id, "agent": self.agent,
                "detail": self.detail}


class PoolRegistry:
    """All pools of one league run.

    ``root`` is where payloads live (``<root>/payloads/<id>.ckpt``).  Without a
    root, payloads stay in memory, which suits tests and fuzzing.
    ``lhmp_interval`` is measured in whatever unit the caller passes as
    ``now`` to :meth:`snapshot_long_term` (iterations on the desk, seconds for
    wall-clock runs).
    """

    def __init__(self, root: Optional[os.PathLike] = None, shmp_capacity: int = DEFAULT_SHMP_CAPACITY,
                 lhmp_interval: float = 50):
        self.root = Path(root) if root is not None else None
        self.shmp_capacity = shmp_capacity
        self.lhmp_interval = lhmp_interval
        self.agents: dict[str, AgentRecord] = {}
        self.pools: dict[tuple[str, str], HistoryModelPool] = {
            (SHARED, DPMP): HistoryModelPool(DPMP, SHARED),
            (SHARED, DMMP): HistoryModelPool(DMMP, SHARED),
        }
        self.checkpoints: dict[str, Checkpoint] = {}
        self.audit: list[AuditRecord] = []
        self.quarantined: list[str] = []
        self._nets: dict[str, PolicyValueNet] = {}
        self._certified: dict[str, Certificate] = {}
        self._serial = 0
        self._lock = threading.RLock()

    # ------------------------------------------------------------ agents

    def register_agent(self, name: str, kind: str) -> None:
        if kind not in AGENT_KINDS:
            raise PoolError(f"unknown agent kind {kind!r}")
        with self._lock:
            if name in self.agents:
                if self.agents[name].kind != kind:
                    raise PoolError(f"agent {name!r} already registered as {self.agents[name].kind}")
                return
            self.agents[name] = AgentRecord(name, kind)
            for k in PRIVATE_KINDS:
                self.pools[(name, k)] = HistoryModelPool(k, name, self.shmp_capacity if k == SHMP else None)

    def _agent(self, name: str) -> AgentRecord:
        try:
            return self.agents[name]
        except KeyError:
            raise PoolError(f"unknown agent {name!r}") from None

    def pool(self, owner: str, kind: str) -> HistoryModelPool:
        try:
            return self.pools[(owner, kind)]
        except KeyError:
            raise PoolError(f"no pool {owner}/{kind}") from None

    # ------------------------------------------------------------ checkpoints

    def new_checkpoint(self, agent: str, net: PolicyValueNet, algorithm: str, training_step: int,
                       obs_config: ObsConfig = ObsConfig()) -> Checkpoint:
        """Freeze a copy of ``net`` as the agent's next checkpoint."""
        with self._lock:
            rec = self._agent(agent)
            idx = rec.next_index
            rec.next_index += 1
            ckpt = Checkpoint(
                checkpoint_id=f"{agent}-{idx:06d}", agent=agent, agent_kind=rec.kind, algorithm=algorithm,
                training_step=int(training_step), creation_index=idx, net_spec=net.spec, obs_config=obs_config,
            )
            frozen = net.copy()
            self.checkpoints[ckpt.checkpoint_id] = ckpt
            self._nets[ckpt.checkpoint_id] = frozen
            if self.root is not None:
                write_checkpoint(self.payload_path(ckpt.checkpoint_id), ckpt, frozen)
            return ckpt

    def payload_path(self, cid: str) -> Path:
        if self.root is None:
            raise PoolError("registry has no storage root")
        return self.root / "payloads" / f"{cid}.ckpt"

    def load_net(self, cid: str) -> PolicyValueNet:
        """Frozen network of a checkpoint (cached; callers must not mutate it)."""
        with self._lock:
            if cid in self._nets:
                return self._nets[cid]
            if cid not in self.checkpoints:
                raise PoolError(f"unknown checkpoint {cid!r}")
        _, net = read_checkpoint(self.payload_path(cid))
        with self._lock:
            self._nets.setdefault(cid, net)
            return self._nets[cid]

    def _check_owner(self, agent: str, ckpt: Checkpoint) -> None:
        self._agent(agent)
        if ckpt.agent != agent:
            raise PoolError(f"checkpoint {ckpt.checkpoint_id} belongs to {ckpt.agent}, not {agent}")
        if ckpt.checkpoint_id not in self.checkpoints:
            raise PoolError(f"checkpoint {ckpt.checkpoint_id} was not created by this registry")

    def _note(self, ckpt: Checkpoint, pool: HistoryModelPool) -> None:
        tag = pool.name
        if tag not in ckpt.provenance:
            ckpt.provenance.append(tag)

    # ------------------------------------------------------------ admissions

    def push_short_term(self, agent: str, ckpt: Checkpoint) -> Optional[str]:
        """Append to the agent's SHMP; returns the evicted id, if any."""
        with self._lock:
            self._check_owner(agent, ckpt)
            pool = self.pool(agent, SHMP)
            if ckpt.checkpoint_id in pool:
                self.audit.append(AuditRecord("duplicate", ckpt.checkpoint_id, agent, SHMP))
                return None
            evicted = pool._append(ckpt.checkpoint_id)
            self._note(ckpt, pool)
            return evicted

    def snapshot_long_term(self, agent: str, ckpt: Checkpoint, now: Optional[float] = None,
                           interval_elapsed: Optional[bool] = None) -> bool:
        """Append to the LHMP iff the interval has elapsed since the last admission.

        Pass ``interval_elapsed`` to override the registry's own clock.
        """
        with self._lock:
            self._check_owner(agent, ckpt)
            rec = self.agents[agent]
            if interval_elapsed is None:
                if now is None:
                    raise PoolError("need either now or interval_elapsed")
                interval_elapsed = rec.last_long_term is None or now - rec.last_long_term >= self.lhmp_interval
            pool = self.pool(agent, LHMP)
            if not interval_elapsed or ckpt.checkpoint_id in pool:
                return False
            if pool.entries and self.checkpoints[pool.entries[-1]].training_step > ckpt.training_step:
                raise PoolError("long-term snapshots must arrive in training order")
            pool._append(ckpt.checkpoint_id)
            self._note(ckpt, pool)
            if now is not None:
                rec.last_long_term = float(now)
            return True

    def certify(self, cid: str, elo: float = 0.0) -> Certificate:
        """Mint a screening certificate (called by the evaluator)."""
        with self._lock:
            if cid not in self.checkpoints:
                raise PoolError(f"unknown checkpoint {cid!r}")
            self._serial += 1
            cert = Certificate(cid, self._serial, float(elo))
            self._certified[cid] = cert
            return cert

    def admit_superior(self, agent: str, ckpt: Checkpoint, certificate: Optional[Certificate]) -> bool:
        """Route a screened checkpoint to SMP, DMMP and (main/policy explorer) DPMP.

        Uncertified checkpoints are rejected with an audit record.  Repeated
        admission of the same checkpoint is a no-op.
        """
        with self._lock:
            self._check_owner(agent, ckpt)
            cid = ckpt.checkpoint_id
            issued = self._certified.get(cid)
            if certificate is None or issued is None or certificate != issued:
                self.audit.append(AuditRecord("rejected", cid, agent, "missing or forged certificate"))
                log.warning("superior admission of %s rejected: not certified", cid)
                return False
            targets = [self.pool(agent, SMP), self.pool(SHARED, DMMP)]
            if self.agents[agent].kind in (MAIN, POLICY_EXPLORER):
                targets.append(self.pool(SHARED, DPMP))
            changed = False
            for pool in targets:
                if cid not in pool:
                    pool._append(cid)
                    self._note(ckpt, pool)
                    changed = True
            if changed:
                self.audit.append(AuditRecord("superior", cid, agent, ",".join(p.kind for p in targets)))
            return changed

    # ------------------------------------------------------------ views

    def visible_pools(self, agent: str) -> list[tuple[HistoryModelPool, int]]:
        with self._lock:
            rec = self._agent(agent)
            pools = [self.pool(agent, k) for k in PRIVATE_KINDS]
            if rec.kind in (MAIN, POLICY_EXPLORER):
                pools.append(self.pool(SHARED, DPMP))
            pools.append(self.pool(SHARED, DMMP))
            return [(p, len(p)) for p in pools]

    def snapshot(self, agent: str) -> list[tuple[str, tuple[str, ...]]]:
        """Consistent (pool name, entries) view for matchmaking."""
        with self._lock:
            return [(p.name, p.entries) for p, _ in self.visible_pools(agent)]

    def referenced(self) -> set[str]:
        with self._lock:
            return {cid for p in self.pools.values() for cid in p.entries}

    def sizes(self) -> dict[str, int]:
        with self._lock:
            return {p.name: len(p) for p in self.pools.values()}

    # ------------------------------------------------------------ persistence

    def to_manifest(self) -> dict:
        with self._lock:
            return {
                "version": MANIFEST_VERSION,
                "shmp_capacity": self.shmp_capacity,
                "lhmp_interval": self.lhmp_interval,
                "agents": [{"name": a.name, "kind": a.kind, "next_index": a.next_index,
                            "last_long_term": a.last_long_term} for a in self.agents.values()],
                "pools": [p.to_dict() for p in self.pools.values()],
                "checkpoints": {cid: c.meta() for cid, c in self.checkpoints.items()},
                "certified": {cid: [c.serial, c.elo] for cid, c in self._certified.items()},
                "serial": self._serial,
                "audit": [a.to_dict() for a in self.audit],
                "quarantined": list(self.quarantined),
            }

    def persist(self, directory: Optional[os.PathLike] = None) -> Path:
        """Write every payload not yet on disk, then the manifest (atomically)."""
        directory = Path(directory) if directory is not None else self.root
        if directory is None:
            raise PoolError("persist needs a directory")
        with self._lock:
            manifest = self.to_manifest()
            for cid, ckpt in self.checkpoints.items():
                path = directory / "payloads" / f"{cid}.ckpt"
                if not path.exists():
                    write_checkpoint(path, ckpt, self.load_net(cid))
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w") as f:
            json.dump(manifest, f, indent=1, sort_keys=True)
        os.replace(tmp, directory / MANIFEST)
        return directory / MANIFEST

    @classmethod
    def load(cls, directory: os.PathLike) -> "PoolRegistry":
        directory = Path(directory)
        path = directory / MANIFEST
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise ManifestError(f"{path}: no manifest") from None
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: manifest does not parse ({e})") from None
        if not isinstance(d, dict) or d.get("version") != MANIFEST_VERSION:
            found = d.get("version") if isinstance(d, dict) else None
            raise ManifestError(f"{path}: manifest version {found!r}, expected {MANIFEST_VERSION}")
        try:
            reg = cls(directory, int(d["shmp_capacity"]), d["lhmp_interval"])
            for a in d["agents"]:
                reg.agents[a["name"]] = AgentRecord(a["name"], a["kind"], int(a["next_index"]),
                                                    a.get("last_long_term"))
            reg.pools = {}
            for pd in d["pools"]:
                p = HistoryModelPool.from_dict(pd)
                reg.pools[(p.owner, p.kind)] = p
            reg.checkpoints = {cid: Checkpoint.from_meta(m) for cid, m in d["checkpoints"].items()}
            reg._certified = {cid: Certificate(cid, int(s), float(e)) for cid, (s, e) in d["certified"].items()}
            reg._serial = int(d["serial"])
            reg.audit = [AuditRecord(**a) for a in d.get("audit", [])]
            reg.quarantined = list(d.get("quarantined", []))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}: malformed manifest ({e!r})") from None
        reg._quarantine_missing()
        return reg

    def _quarantine_missing(self) -> None:
        bad = []
        for cid in list(self.checkpoints):
            p = self.payload_path(cid)
            try:
                ok = p.exists() and read_checkpoint(p)[0].checkpoint_id == cid
            except (CheckpointFormatError, OSError, KeyError):
                ok = False
            if not ok:
                bad.append(cid)
        for cid in bad:
            log.warning("checkpoint %s has no valid payload; quarantined", cid)
            del self.checkpoints[cid]
            self.quarantined.append(cid)
            for pool in self.pools.values():
                if cid in pool.entries:
                    pool.entries = tuple(e for e in pool.entries if e != cid)

    def garbage_collect(self, keep: Iterable[str] = ()) -> list[str]:
        """Delete payloads no pool references (plus unlisted ``keep`` ids)."""
        if self.root is None:
            return []
        with self._lock:
            live = self.referenced() | set(keep)
            removed = []
            for cid in sorted(set(self.checkpoints) - live):
                path = self.payload_path(cid)
                if path.exists():
                    path.unlink()
                del self.checkpoints[cid]
                self._nets.pop(cid, None)
                removed.append(cid)
            return removed


def registries_equal(a: PoolRegistry, b: PoolRegistry) -> bool:
    """Same pools, order, ids, counters and checkpoint metadata."""
    ma, mb = a.to_manifest(), b.to_manifest()
    return all(ma[k] == mb[k] for k in ("agents", "pools", "checkpoints", "certified", "serial", "shmp_capacity"))
