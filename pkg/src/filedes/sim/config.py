"""Scenario configuration (JSON schema version 1).

See ``docs/scenario.md`` for the field reference. Unknown keys are rejected
so that typos surface as :class:`ConfigInvalid` instead of silently using a
default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

from ..errors import ConfigInvalid
from ..rollup import DEFAULT_AUDIT_FRACTION, DEFAULT_TIERS
from ..selection import DEFAULT_RETRY_CAP, DEFAULT_W
from ..versioning import DEFAULT_ROLLOVER

SCHEMA_VERSION = 1
ADVERSARY_KINDS = ("sybil", "generation", "offline")


@dataclass
class MinerSpec:
    count: int = 6
    pow: List[float] = field(default_factory=lambda: [1.0])
    drop_probability: float = 0.0


@dataclass
class AdversarySpec:
    kind: str
    count: int = 1
    pow: float = 1.0
    identities: int = 3  # sybil: fake identities registered
    keep: int = 1  # sybil: replicas kept (m') per increment
    cached_paths: int = 0  # generation: Merkle paths kept per replica
    offline_from: int = 0  # offline: first epoch the miner stops answering


@dataclass
class ClientSpec:
    count: int = 2
    file_size: int = 4096
    versions: int = 3
    edit_rate: float = 0.02
    plan: str = "mixed"  # a | b | mixed
    version_interval: int = 2


@dataclass
class ProtocolParams:
    ctr: int = 3
    w: float = DEFAULT_W
    rounds: int = 10
    rollover: int = DEFAULT_ROLLOVER
    tiers: List[int] = field(default_factory=lambda: list(DEFAULT_TIERS))
    challenge_period: int = 1
    retry_cap: int = DEFAULT_RETRY_CAP
    rsa_bits: int = 1024
    audit_fraction: float = DEFAULT_AUDIT_FRACTION


@dataclass
class ScenarioConfig:
    seed: int = 0
    epochs: int = 20
    miners: MinerSpec = field(default_factory=MinerSpec)
    adversaries: List[AdversarySpec] = field(default_factory=list)
    clients: ClientSpec = field(default_factory=ClientSpec)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    retrieve_every: int = 5
    schema: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        if not isinstance(obj, dict):
            raise ConfigInvalid("<root>", "config must be a JSON object")
        obj = dict(obj)
        try:
            cfg = cls(
                seed=obj.pop("seed", 0),
                epochs=obj.pop("epochs", 20),
                miners=_build(MinerSpec, obj.pop("miners", {}), "miners"),
                adversaries=[_build(AdversarySpec, a, f"adversaries[{i}]")
                             for i, a in enumerate(obj.pop("adversaries", []))],
                clients=_build(ClientSpec, obj.pop("clients", {}), "clients"),
                protocol=_build(ProtocolParams, obj.pop("protocol", {}), "protocol"),
                retrieve_every=obj.pop("retrieve_every", 5),
                schema=obj.pop("schema", SCHEMA_VERSION),
            )
        except TypeError as exc:
            raise ConfigInvalid("<root>", str(exc)) from None
        if obj:
            raise ConfigInvalid(sorted(obj)[0], "unknown field")
        if isinstance(cfg.miners.pow, (int, float)):
            cfg.miners.pow = [float(cfg.miners.pow)]
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, seed: Optional[int] = None) -> "ScenarioConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("<file>", f"invalid JSON: {exc}") from None
        cfg = cls.from_json(obj)
        if seed is not None:
            cfg.seed = seed
        return cfg

    def validate(self) -> None:
        def need(cond: bool, fld: str, msg: str) -> None:
            if not cond:
                raise ConfigInvalid(fld, msg)

        need(self.schema == SCHEMA_VERSION, "schema", f"unsupported schema {self.schema}")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        need(isinstance(self.epochs, int) and self.epochs >= 1, "epochs", "must be >= 1")
        need(self.retrieve_every >= 1, "retrieve_every", "must be >= 1")
        m = self.miners
        need(m.count >= 0, "miners.count", "must be >= 0")
        need(len(m.pow) >= 1 and all(p >= 0 for p in m.pow), "miners.pow", "needs non-negative values")
        need(0.0 <= m.drop_probability < 1.0, "miners.drop_probability", "must lie in [0, 1)")
        for i, a in enumerate(self.adversaries):
            f = f"adversaries[{i}]"
            need(a.kind in ADVERSARY_KINDS, f + ".kind", f"must be one of {ADVERSARY_KINDS}")
            need(a.count >= 1, f + ".count", "must be >= 1")
            need(a.pow >= 0, f + ".pow", "must be >= 0")
            if a.kind == "sybil":
                need(a.identities >= 1, f + ".identities", "must be >= 1")
                need(0 <= a.keep < self.protocol.ctr, f + ".keep", "must satisfy 0 <= keep < ctr")
            if a.kind == "generation":
                need(a.cached_paths >= 0, f + ".cached_paths", "must be >= 0")
            if a.kind == "offline":
                need(a.offline_from >= 0, f + ".offline_from", "must be >= 0")
        c = self.clients
        need(c.count >= 1, "clients.count", "must be >= 1")
        need(c.file_size >= 1, "clients.file_size", "must be >= 1")
        need(c.versions >= 1, "clients.versions", "must be >= 1")
        need(0.0 <= c.edit_rate <= 1.0, "clients.edit_rate", "must lie in [0, 1]")
        need(c.plan in ("a", "b", "mixed"), "clients.plan", "must be a, b or mixed")
        need(c.version_interval >= 1, "clients.version_interval", "must be >= 1")
        p = self.protocol
        need(p.ctr >= 1, "protocol.ctr", "must be >= 1")
        need(0.0 < p.w < 1.0, "protocol.w", "must lie in (0, 1)")
        need(p.rounds >= 1, "protocol.rounds", "must be >= 1")
        need(p.rollover >= 1, "protocol.rollover", "must be >= 1")
        need(bool(p.tiers) and all(t >= 1 and t & (t - 1) == 0 for t in p.tiers),
             "protocol.tiers", "must be non-empty powers of two")
        need(p.challenge_period >= 1, "protocol.challenge_period", "must be >= 1")
        need(p.retry_cap >= 1, "protocol.retry_cap", "must be >= 1")
        need(p.rsa_bits in (1024, 2048, 3072), "protocol.rsa_bits", "must be 1024, 2048 or 3072")
        need(0.0 <= p.audit_fraction <= 1.0, "protocol.audit_fraction", "must lie in [0, 1]")
        honest = m.count + sum(a.count for a in self.adversaries if a.kind == "offline")
        total = honest + sum(a.count * (a.identities if a.kind == "sybil" else 1) for a in self.adversaries
                             if a.kind != "offline")
        need(total >= 1, "miners.count", "scenario has no storage miners")


def _build(cls, obj, name: str):
    if not isinstance(obj, dict):
        raise ConfigInvalid(name, "must be an object")
    known = set(cls.__dataclass_fields__)
    extra = sorted(set(obj) - known)
    if extra:
        raise ConfigInvalid(f"{name}.{extra[0]}", "unknown field")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigInvalid(name, str(exc)) from None
