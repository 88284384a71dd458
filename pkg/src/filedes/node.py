"""Single-node deployment: one ledger, four local storage miners, one rollup miner.

Everything lives under a home directory::

    events.jsonl              ledger event log
    rollup.seed               rollup miner signing seed
    stores/<miner>/<cid>.rep  replica files, one directory per local miner
    witnesses/<cid>.wit       membership witnesses issued by the rollup miner
    files/<fid>/keys/<j>.key  the client's per-replica keys
    files/<fid>/head.bin      the client's copy of the latest version

``<fid>`` is a hash of the file id so arbitrary names are safe on disk.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from pathlib import Path
from typing import Dict, List, Optional

from .crypto.pre import PreKeyPair, pre_keygen
from .crypto.replica import EncryptedReplica, Plan
from .crypto.rsa import RsaKeyPair, rsa_keygen
from .errors import ConfigInvalid, DuplicateAggregate, EmptyBatch, NotStored, ProofRejected, RetrieveFailed
from .ledger import Ledger
from .merkle import HASH_SIZE
from .poes import DEFAULT_ROUNDS, PoStProof, ReplicaStore, check_proof, cycle_prove, load_proof, prove, setup
from .rng import SeedStream
from .rollup import MembershipWitness, RollupKey, RollupMiner, retrieve

LOCAL_MINERS = tuple(f"local{i}" for i in range(4))


def load_key(data: bytes):
    """Parse a key file written by :func:`save_key` (Plan A or Plan B)."""
    if data[:4] == b"RSAK":
        return RsaKeyPair.from_bytes(data)
    if data[:4] == b"PREK":
        return PreKeyPair.from_bytes(data)
    raise ConfigInvalid("key", "not a Plan A or Plan B key file")


def generate_key(plan, rsa_bits: int = 2048):
    return rsa_keygen(rsa_bits) if Plan.parse(plan) is Plan.A else pre_keygen()


def key_plan(key) -> Plan:
    return Plan.A if isinstance(key, RsaKeyPair) else Plan.B


def _hex32(value: str, name: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise ConfigInvalid(name, "must be hex") from None
    if len(raw) != HASH_SIZE:
        raise ConfigInvalid(name, f"must be {HASH_SIZE} bytes")
    return raw


class Node:
    def __init__(self, home, rsa_bits: int = 2048, rounds: int = DEFAULT_ROUNDS):
        self.home = Path(home)
        self.home.mkdir(parents=True, exist_ok=True)
        self.rsa_bits = rsa_bits
        self.rounds = rounds
        self.lock = threading.RLock()
        events = self.home / "events.jsonl"
        self.ledger = Ledger.from_file(events) if events.exists() else Ledger()
        self.stores: Dict[str, ReplicaStore] = {m: ReplicaStore() for m in LOCAL_MINERS}
        for m in LOCAL_MINERS:
            if m not in self.ledger.state.profiles:
                self.ledger.register_miner(m, 1.0)
            for path in sorted((self.home / "stores" / m).glob("*.rep")):
                self.stores[m].put(EncryptedReplica.from_bytes(path.read_bytes()))
        seed_path = self.home / "rollup.seed"
        if not seed_path.exists():
            seed_path.write_bytes(secrets.token_bytes(32))
        self.rollup = RollupMiner("rollup0", RollupKey(seed_path.read_bytes()))
        self.rollup.register(self.ledger)
        for path in sorted((self.home / "witnesses").glob("*.wit")):
            w = MembershipWitness.from_bytes(path.read_bytes())
            self.rollup.witnesses[w.cid] = w
        self._save()

    # -- persistence ------------------------------------------------------
    def _save(self) -> None:
        self.ledger.write_events(self.home / "events.jsonl")

    def _file_dir(self, file_id: str) -> Path:
        return self.home / "files" / hashlib.sha256(file_id.encode()).hexdigest()[:32]

    def _keys(self, file_id: str) -> List:
        paths = sorted((self._file_dir(file_id) / "keys").glob("*.key"), key=lambda p: int(p.stem))
        return [load_key(p.read_bytes()) for p in paths]

    def _store_replica(self, miner_id: str, replica: EncryptedReplica) -> bool:
        d = self.home / "stores" / miner_id
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{replica.cid}.rep").write_bytes(replica.to_bytes())
        self.stores[miner_id].put(replica)
        return True

    def _save_witnesses(self, witnesses) -> None:
        d = self.home / "witnesses"
        d.mkdir(exist_ok=True)
        for cid, w in witnesses.items():
            (d / f"{cid}.wit").write_bytes(w.to_bytes())

    # -- prover side ------------------------------------------------------
    def _holder(self, cid: str) -> ReplicaStore:
        miner = self.ledger.deal(cid).miner_id
        store = self.stores.get(miner)
        if store is None or cid not in store:
            raise NotStored(cid)
        return store

    def request_post(self, miner_id: str, cid: str, c: bytes, t: int) -> Optional[PoStProof]:
        store = self.stores.get(miner_id)
        if store is None or cid not in store:
            return None
        return cycle_prove(c, t, cid, store)

    def _aggregate(self, cids: List[str], epoch: int) -> dict:
        report, batch = self.rollup.run_epoch(cids, self.rounds, self, self.ledger, epoch)
        if batch is None:
            raise EmptyBatch(f"no valid proofs for epoch {epoch}")
        self._save_witnesses(batch.witnesses)
        return {"epoch": epoch, "members": batch.proof.member_count, "tier": batch.tier,
                "record": batch.proof.to_bytes().hex(), "outcomes": report.outcomes}

    # -- operations -------------------------------------------------------
    def put(self, file_id: str, data: bytes, ctr: int = 3, plan="a", keys: Optional[list] = None) -> dict:
        """Store ``data`` as the next version of ``file_id`` and cover it with a rollup."""
        with self.lock:
            plan = Plan.parse(plan)
            if ctr < 1:
                raise ConfigInvalid("ctr", "must be >= 1")
            fdir = self._file_dir(file_id)
            stored = self._keys(file_id)
            if stored:
                if keys:
                    raise ConfigInvalid("keys", "file already has keys; later versions reuse them")
                if key_plan(stored[0]) is not plan:
                    raise ConfigInvalid("plan", f"file was stored under plan {key_plan(stored[0]).value}")
                if ctr != len(stored):
                    raise ConfigInvalid("ctr", f"file was stored with ctr={len(stored)}")
                keys = stored
            else:
                keys = list(keys or [generate_key(plan, self.rsa_bits) for _ in range(ctr)])
                if len(keys) != ctr:
                    raise ConfigInvalid("keys", f"expected {ctr} keys, got {len(keys)}")
                if any(key_plan(k) is not plan for k in keys):
                    raise ConfigInvalid("keys", f"keys do not match plan {plan.value}")
            head = fdir / "head.bin"
            previous = head.read_bytes() if head.exists() else b""
            rng = SeedStream(self.ledger.head_digest() + hashlib.sha256(data).digest(), "node.put")
            res = setup(file_id, data, ctr, plan, keys, self.ledger, self._store_replica, rng,
                        previous=previous)
            (fdir / "keys").mkdir(parents=True, exist_ok=True)
            if not stored:
                for j, k in enumerate(keys):
                    (fdir / "keys" / f"{j}.key").write_bytes(k.to_bytes())
            head.write_bytes(data)
            for cid in res.cids:
                self.rollup.prepare(cid, self.ledger)
            rollup = self._aggregate(res.cids, self.ledger.next_free_epoch())
            self.ledger.advance_height(1)
            self._save()
            return {"file_id": file_id, "version": res.version, "kind": res.kind, "cids": res.cids,
                    "miners": res.miners, "increment_size": res.increment_size,
                    "stored_bytes": res.stored_bytes, "epoch": rollup["epoch"]}

    def challenge(self, cid: str) -> dict:
        with self.lock:
            deal = self.ledger.deal(cid)
            c = hashlib.sha256(b"filedes.node.challenge" + self.ledger.head_digest() + bytes.fromhex(cid)).digest()
            return {"cid": cid, "challenge": c.hex(), "root": deal.root.hex(), "leaf_count": deal.leaf_count,
                    "miner_id": deal.miner_id}

    def prove(self, cid: str, challenge: str, rounds: Optional[int] = None) -> bytes:
        with self.lock:
            c = _hex32(challenge, "challenge")
            store = self._holder(cid)
            proof = prove(c, cid, store) if rounds is None else cycle_prove(c, rounds, cid, store)
            return proof.to_bytes()

    def verify(self, proof_bytes: bytes, root: str, challenge: str) -> dict:
        proof = load_proof(proof_bytes)
        rt, c = _hex32(root, "root"), _hex32(challenge, "challenge")
        with self.lock:
            leaf_count = self.ledger.deal(proof.cid).leaf_count if self.ledger.has_deal(proof.cid) else None
        if not check_proof(proof, rt, c, leaf_count):
            raise ProofRejected(f"proof for {proof.cid} does not verify")
        return {"valid": True, "cid": proof.cid, "kind": "pos" if proof.to_bytes()[0] == 1 else "post"}

    def rollup_epoch(self, epoch: int) -> dict:
        """Challenge every live deal and aggregate the proofs under ``epoch``."""
        with self.lock:
            if self.ledger.aggregate_record(epoch) is not None:
                raise DuplicateAggregate(f"epoch {epoch} already has an aggregate")
            live = [cid for cid, d in sorted(self.ledger.state.deals.items())
                    if not self.ledger.profile(d.miner_id).penalized]
            live = live[:max(self.rollup.tiers)]
            if not live:
                raise EmptyBatch("no live deals to challenge")
            out = self._aggregate(live, epoch)
            self.ledger.advance_height(1)
            self._save()
            return out

    def retrieve(self, file_id: str, version: Optional[int] = None) -> bytes:
        with self.lock:
            keys = self._keys(file_id)
            if not keys:
                raise RetrieveFailed(f"no keys for {file_id}")

            def fetch(cid: str) -> Optional[EncryptedReplica]:
                try:
                    return self._holder(cid).replica(cid)
                except (NotStored, KeyError):
                    return None

            def key_for(j: int):
                k = keys[j]
                return k.public if isinstance(k, RsaKeyPair) else k

            return retrieve(file_id, self.ledger, fetch, self.rollup.witness, key_for, version)

    def status(self) -> dict:
        with self.lock:
            st = self.ledger.state
            return {"height": st.height, "events": len(self.ledger.events),
                    "head": self.ledger.head_digest().hex(), "deals": len(st.deals),
                    "files": {f: c.latest_version for f, c in sorted(st.chains.items())},
                    "aggregates": sorted(st.aggregates), "penalties": len(st.penalties)}
