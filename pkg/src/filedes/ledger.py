"""Totally ordered on-chain state.

A single in-process sequencer stands in for the blockchain and its BFT
consensus: agreement and total order are assumed, not re-proven. Every
mutation is an event appended to a log; replaying the log rebuilds the state
exactly. The log persists as newline-delimited JSON, one event per line::

    {"seq": 0, "height": 0, "type": "register_miner", "miner_id": "m0", "pow": 1.0, ...}

Event types: ``register_miner``, ``register_rollup``, ``advance``, ``deal``,
``penalize``, ``version``, ``beacon``, ``aggregate``.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .errors import DuplicateAggregate, DuplicateDeal, UnknownCid, UnknownMiner
from .selection import MinerProfile
from .versioning import VersionChain


@dataclass(frozen=True)
class DealRecord:
    cid: str
    miner_id: str
    root: bytes
    height: int
    plan: str
    leaf_count: int
    size: int
    file_id: str = ""
    version: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["root"] = self.root.hex()
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "DealRecord":
        obj = dict(obj)
        obj["root"] = bytes.fromhex(obj["root"])
        return cls(**obj)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class LedgerState:
    height: int = 0
    deals: Dict[str, DealRecord] = field(default_factory=dict)
    profiles: Dict[str, MinerProfile] = field(default_factory=dict)
    aggregates: Dict[int, bytes] = field(default_factory=dict)
    chains: Dict[str, VersionChain] = field(default_factory=dict)
    rollup_keys: Dict[str, bytes] = field(default_factory=dict)
    beacons: Dict[int, bytes] = field(default_factory=dict)
    penalties: List[dict] = field(default_factory=list)


class Ledger:
    """Single-writer, multi-reader ledger. All writes go through :meth:`_commit`."""

    def __init__(self):
        self.state = LedgerState()
        self.events: List[dict] = []
        self._lock = threading.Lock()

    # -- sequencing -------------------------------------------------------
    def _commit(self, event: dict) -> dict:
        with self._lock:
            event = {"seq": len(self.events), "height": self.state.height, **event}
            self._apply(event)
            self.events.append(event)
            return event

    def _apply(self, ev: dict) -> None:
        st = self.state
        kind = ev["type"]
        if kind == "register_miner":
            st.profiles[ev["miner_id"]] = MinerProfile(ev["miner_id"], float(ev["pow"]), int(ev["last_deal_height"]))
        elif kind == "register_rollup":
            st.rollup_keys[ev["rollup_id"]] = bytes.fromhex(ev["public_key"])
        elif kind == "advance":
            st.height += int(ev["n"])
        elif kind == "deal":
            deal = DealRecord.from_json(ev["deal"])
            st.deals[deal.cid] = deal
            prof = st.profiles[deal.miner_id]
            prof.last_deal_height = deal.height
        elif kind == "penalize":
            st.profiles[ev["miner_id"]].penalized = True
            st.penalties.append({k: ev[k] for k in ("miner_id", "reason", "cid", "height")})
        elif kind == "version":
            chain = st.chains.get(ev["file_id"])
            if chain is None:
                chain = st.chains[ev["file_id"]] = VersionChain(ev["file_id"], int(ev["rollover"]))
            chain.append(int(ev["version"]), ev["kind"], ev["cids"])
        elif kind == "beacon":
            st.beacons[int(ev["epoch"])] = bytes.fromhex(ev["value"])
        elif kind == "aggregate":
            st.aggregates[int(ev["epoch"])] = bytes.fromhex(ev["record"])
        else:
            raise ValueError(f"unknown event type {kind!r}")

    # -- mutations --------------------------------------------------------
    def register_miner(self, miner_id: str, pow: float = 1.0, last_deal_height: int = 0) -> None:
        self._commit({"type": "register_miner", "miner_id": miner_id, "pow": float(pow),
                      "last_deal_height": int(last_deal_height)})

    def register_rollup_miner(self, rollup_id: bytes, public_key: bytes) -> None:
        self._commit({"type": "register_rollup", "rollup_id": rollup_id.hex(), "public_key": public_key.hex()})

    def advance_height(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("height never decreases")
        self._commit({"type": "advance", "n": int(n)})
        return self.state.height

    def record_deal(self, deal: DealRecord) -> None:
        if deal.miner_id not in self.state.profiles:
            raise UnknownMiner(deal.miner_id)
        if deal.cid in self.state.deals:
            raise DuplicateDeal(f"cid {deal.cid} already has a deal")
        self._commit({"type": "deal", "deal": deal.to_json()})

    def penalize(self, miner_id: str, reason: str, cid: str = "") -> None:
        if miner_id not in self.state.profiles:
            raise UnknownMiner(miner_id)
        self._commit({"type": "penalize", "miner_id": miner_id, "reason": reason, "cid": cid})

    def record_version(self, file_id: str, version: int, kind: str, cids: Iterable[str],
                       rollover: int) -> None:
        self._commit({"type": "version", "file_id": file_id, "version": int(version), "kind": kind,
                      "cids": list(cids), "rollover": int(rollover)})

    def record_beacon(self, epoch: int, value: bytes) -> None:
        self._commit({"type": "beacon", "epoch": int(epoch), "value": value.hex()})

    def open_epoch(self, epoch: int, seed: bytes = b"") -> bytes:
        """Publish the epoch's challenge beacon (idempotent)."""
        if epoch not in self.state.beacons:
            value = hashlib.sha256(b"filedes.beacon" + seed + epoch.to_bytes(8, "big")
                                   + self.head_digest()).digest()
            self.record_beacon(epoch, value)
        return self.state.beacons[epoch]

    def record_aggregate(self, epoch: int, record: bytes) -> None:
        if epoch in self.state.aggregates:
            raise DuplicateAggregate(f"epoch {epoch} already has an aggregate")
        self._commit({"type": "aggregate", "epoch": int(epoch), "record": record.hex()})

    # -- queries ----------------------------------------------------------
    @property
    def height(self) -> int:
        return self.state.height

    def deal(self, cid: str) -> DealRecord:
        try:
            return self.state.deals[cid]
        except KeyError:
            raise UnknownCid(cid) from None

    def has_deal(self, cid: str) -> bool:
        return cid in self.state.deals

    def root_of(self, cid: str) -> bytes:
        return self.deal(cid).root

    def profile(self, miner_id: str) -> MinerProfile:
        try:
            return self.state.profiles[miner_id]
        except KeyError:
            raise UnknownMiner(miner_id) from None

    def profiles(self) -> List[MinerProfile]:
        return [self.state.profiles[m] for m in sorted(self.state.profiles)]

    def delta_height(self, miner_id: str) -> int:
        return self.height - self.profile(miner_id).last_deal_height

    def chain(self, file_id: str) -> Optional[VersionChain]:
        return self.state.chains.get(file_id)

    def aggregate_record(self, epoch: int) -> Optional[bytes]:
        return self.state.aggregates.get(epoch)

    def next_free_epoch(self) -> int:
        return max(self.state.aggregates, default=-1) + 1

    def rollup_key(self, rollup_id: bytes) -> Optional[bytes]:
        return self.state.rollup_keys.get(rollup_id.hex())

    def head_digest(self) -> bytes:
        h = hashlib.sha256()
        for ev in self.events:
            h.update(dumps(ev).encode())
        return h.digest()

    def snapshot(self) -> dict:
        """Canonical JSON-able view of the full state (used to compare replays)."""
        st = self.state
        return {
            "height": st.height,
            "deals": {c: d.to_json() for c, d in sorted(st.deals.items())},
            "profiles": {m: asdict(p) for m, p in sorted(st.profiles.items())},
            "aggregates": {str(e): r.hex() for e, r in sorted(st.aggregates.items())},
            "chains": {f: c.to_json() for f, c in sorted(st.chains.items())},
            "rollup_keys": {k: v.hex() for k, v in sorted(st.rollup_keys.items())},
            "beacons": {str(e): v.hex() for e, v in sorted(st.beacons.items())},
            "penalties": list(st.penalties),
        }

    # -- persistence ------------------------------------------------------
    def dump_events(self) -> str:
        return "".join(dumps(ev) + "\n" for ev in self.events)

    def write_events(self, path) -> None:
        Path(path).write_text(self.dump_events())

    @classmethod
    def replay(cls, events: Iterable[dict]) -> "Ledger":
        ledger = cls()
        for ev in events:
            if ev["seq"] != len(ledger.events):
                raise ValueError(f"event log out of order at seq {ev['seq']}")
            if ev["height"] != ledger.state.height:
                raise ValueError(f"event {ev['seq']} height mismatch")
            ledger._apply(ev)
            ledger.events.append(ev)
        return ledger

    @classmethod
    def from_file(cls, path) -> "Ledger":
        lines = Path(path).read_text().splitlines()
        return cls.replay(json.loads(line) for line in lines if line.strip())
