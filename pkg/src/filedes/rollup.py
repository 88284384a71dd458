"""Batch verification of PoSt proofs and verified file retrieval.

The rollup miner re-verifies every member PoSt itself, commits to the sorted
member statement digests in a Merkle root and signs the result with Ed25519.
This verify-then-commit scheme gives the same on-chain shape as a recursive
SNARK (a fixed 256-byte record checked with constant work, plus per-member
membership witnesses) but trusts the signing rollup miner. Audit mode
re-checks a random sample of the retained member proofs to keep it honest.

On-chain record, exactly 256 bytes, big-endian::

    epoch u64 | member_root 32 | member_count u32 | rollup_miner_id 32 | signature 64 | zero pad

Member statement digest: ``H(cid || rt || c || H(serialized PoSt))``. The
member tree is always padded to the largest tier, so every witness path has
the same depth.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .crypto.replica import EncryptedReplica, Plan, open_replica
from .errors import (DecryptFailure, EmptyBatch, MalformedProof, OversizedBatch, PatchMismatch,
                     RetrieveFailed, UnknownCid)
from .ledger import Ledger
from .merkle import MerklePath, MerkleTree, build_tree, prove_path, verify_path
from .poes import TRANSPARENT, ArgumentBackend, PoStProof, check_post
from .versioning import Increment, apply_increments

RECORD_SIZE = 256
DEFAULT_TIERS = (1, 8, 64, 512)
DEFAULT_AUDIT_FRACTION = 0.10
_LAYOUT = struct.Struct(">Q32sI32s64s")
_EMPTY_SLOT = bytes(32)


def _h(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


def tier_for(k: int, tiers: Sequence[int] = DEFAULT_TIERS) -> int:
    if k < 1:
        raise EmptyBatch("a batch needs at least one member")
    for tier in sorted(tiers):
        if k <= tier:
            return tier
    raise OversizedBatch(f"{k} members exceed the largest tier {max(tiers)}")


def statement_digest(proof: PoStProof) -> bytes:
    return member_digest(proof.cid, proof.root, proof.initial_challenge, _h(proof.to_bytes()))


def member_digest(cid: str, root: bytes, challenge: bytes, post_hash: bytes) -> bytes:
    return _h(bytes.fromhex(cid), root, challenge, post_hash)


@dataclass
class OpCounter:
    hashes: int = 0
    sig_checks: int = 0

    @property
    def total(self) -> int:
        return self.hashes + self.sig_checks


class RollupKey:
    """Deterministic Ed25519 signing identity of a rollup miner."""

    def __init__(self, seed: bytes):
        self._sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"filedes.rollup.key" + seed).digest())
        self.public_key = self._sk.public_key().public_bytes_raw()
        self.rollup_id = hashlib.sha256(self.public_key).digest()

    def sign(self, digest: bytes) -> bytes:
        return self._sk.sign(digest)


def _signed_digest(epoch: int, member_root: bytes, member_count: int, rollup_id: bytes) -> bytes:
    return _h(b"filedes.rollup", struct.pack(">Q", epoch), member_root, struct.pack(">I", member_count), rollup_id)


@dataclass(frozen=True)
class AggregateProof:
    epoch: int
    member_root: bytes
    member_count: int
    rollup_miner_id: bytes
    attestation: bytes

    def to_bytes(self) -> bytes:
        body = _LAYOUT.pack(self.epoch, self.member_root, self.member_count, self.rollup_miner_id, self.attestation)
        return body.ljust(RECORD_SIZE, b"\x00")

    @classmethod
    def from_bytes(cls, data: bytes) -> "AggregateProof":
        if len(data) != RECORD_SIZE:
            raise MalformedProof(f"aggregate record must be {RECORD_SIZE} bytes, got {len(data)}")
        if any(data[_LAYOUT.size:]):
            raise MalformedProof("non-zero padding in aggregate record")
        return cls(*_LAYOUT.unpack_from(data))


@dataclass(frozen=True)
class MembershipWitness:
    """Proof that ``cid`` is covered by the aggregate of ``epoch``.

    Carries the statement inputs (root, challenge, PoSt hash) so the checker
    can recompute the member digest and bind it to ``cid``.
    """

    epoch: int
    cid: str
    root: bytes
    challenge: bytes
    post_hash: bytes
    statement_digest: bytes
    path: MerklePath

    def to_bytes(self) -> bytes:
        return (struct.pack(">Q", self.epoch) + bytes.fromhex(self.cid) + self.root + self.challenge
                + self.post_hash + self.statement_digest + self.path.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "MembershipWitness":
        if len(data) < 8 + 5 * 32:
            raise MalformedProof("truncated membership witness")
        (epoch,) = struct.unpack(">Q", data[:8])
        fields = [data[8 + 32 * i:8 + 32 * (i + 1)] for i in range(5)]
        path = MerklePath.from_bytes(data[8 + 160:])
        return cls(epoch, fields[0].hex(), fields[1], fields[2], fields[3], fields[4], path)


@dataclass
class AggregateBatch:
    proof: AggregateProof
    tier: int
    members: List[PoStProof]
    witnesses: Dict[str, MembershipWitness]


def aggregate(proofs: Sequence[PoStProof], epoch: int, key: RollupKey,
              tiers: Sequence[int] = DEFAULT_TIERS) -> AggregateBatch:
    """Commit to ``proofs`` (deduplicated by cid, sorted) and sign the batch."""
    unique: Dict[str, PoStProof] = {}
    for p in proofs:
        unique.setdefault(p.cid, p)
    members = [unique[c] for c in sorted(unique)]
    tier = tier_for(len(members), tiers)
    width = max(tiers)
    digests = [statement_digest(p) for p in members]
    tree = MerkleTree.from_leaves(digests + [_EMPTY_SLOT] * (width - len(digests)))
    sig = key.sign(_signed_digest(epoch, tree.root, len(members), key.rollup_id))
    agg = AggregateProof(epoch, tree.root, len(members), key.rollup_id, sig)
    witnesses = {}
    for i, p in enumerate(members):
        witnesses[p.cid] = MembershipWitness(epoch, p.cid, p.root, p.initial_challenge, _h(p.to_bytes()),
                                             digests[i], prove_path(tree, i))
    return AggregateBatch(agg, tier, members, witnesses)


def verify_aggregate(agg: AggregateProof, ledger: Ledger, counter: OpCounter | None = None) -> bool:
    """Signature check plus equality with the on-chain record: constant work."""
    counter = counter if counter is not None else OpCounter()
    onchain = ledger.aggregate_record(agg.epoch)
    if onchain is None or onchain != agg.to_bytes():
        return False
    public = ledger.rollup_key(agg.rollup_miner_id)
    if public is None:
        return False
    digest = _signed_digest(agg.epoch, agg.member_root, agg.member_count, agg.rollup_miner_id)
    counter.hashes += 1
    counter.sig_checks += 1
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(agg.attestation, digest)
    except InvalidSignature:
        return False
    return True


def check_membership(agg: AggregateProof, witness: MembershipWitness,
                     tiers: Sequence[int] = DEFAULT_TIERS) -> bool:
    if witness.epoch != agg.epoch:
        return False
    if witness.path.depth != (max(tiers) - 1).bit_length():
        return False
    if witness.path.leaf_index >= agg.member_count:
        return False
    expected = member_digest(witness.cid, witness.root, witness.challenge, witness.post_hash)
    if expected != witness.statement_digest:
        return False
    return verify_path(agg.member_root, witness.path.leaf_index, witness.statement_digest, witness.path)


# -- rollup miner -----------------------------------------------------------

class ProverNetwork(Protocol):
    def request_post(self, miner_id: str, cid: str, c: bytes, t: int) -> Optional[PoStProof]:
        """Ask ``miner_id`` for a PoSt; ``None`` models a timeout."""


@dataclass
class CollectionReport:
    epoch: int
    proofs: List[PoStProof] = field(default_factory=list)
    outcomes: Dict[str, str] = field(default_factory=dict)  # cid -> ok | timeout | invalid

    @property
    def penalties(self) -> int:
        return sum(1 for v in self.outcomes.values() if v != "ok")


def epoch_challenge(ledger: Ledger, epoch: int, cid: str) -> bytes:
    return _h(ledger.open_epoch(epoch), bytes.fromhex(cid))


class RollupMiner:
    def __init__(self, name: str, key: RollupKey, tiers: Sequence[int] = DEFAULT_TIERS,
                 backend: ArgumentBackend = TRANSPARENT):
        self.name = name
        self.key = key
        self.tiers = tuple(sorted(tiers))
        self.backend = backend
        self.queue: List[str] = []
        self.witnesses: Dict[str, MembershipWitness] = {}
        self.retained: Dict[int, List[PoStProof]] = {}

    def register(self, ledger: Ledger) -> None:
        if ledger.rollup_key(self.key.rollup_id) is None:
            ledger.register_rollup_miner(self.key.rollup_id, self.key.public_key)

    def prepare(self, cid: str, ledger: Ledger) -> str:
        if not ledger.has_deal(cid):
            raise UnknownCid(cid)
        if cid not in self.queue:
            self.queue.append(cid)
        return f"queued {cid}"

    def collect(self, cids: Iterable[str], t: int, network: ProverNetwork, ledger: Ledger,
                epoch: int) -> CollectionReport:
        report = CollectionReport(epoch)
        for cid in sorted(set(cids)):
            deal = ledger.deal(cid)
            c = epoch_challenge(ledger, epoch, cid)
            reply = network.request_post(deal.miner_id, cid, c, t)
            if reply is None:
                report.outcomes[cid] = "timeout"
                ledger.penalize(deal.miner_id, "timeout", cid)
            elif reply.cid == cid and check_post(reply, deal.root, c, deal.leaf_count, self.backend):
                report.outcomes[cid] = "ok"
                report.proofs.append(reply)
            else:
                report.outcomes[cid] = "invalid"
                ledger.penalize(deal.miner_id, "invalid_proof", cid)
        return report

    def aggregate(self, proofs: Sequence[PoStProof], epoch: int, ledger: Ledger) -> AggregateBatch:
        batch = aggregate(proofs, epoch, self.key, self.tiers)
        self.register(ledger)
        ledger.record_aggregate(epoch, batch.proof.to_bytes())
        self.witnesses.update(batch.witnesses)
        self.retained[epoch] = list(batch.members)
        covered = set(batch.witnesses)
        self.queue = [c for c in self.queue if c not in covered]
        return batch

    def run_epoch(self, cids: Iterable[str], t: int, network: ProverNetwork, ledger: Ledger,
                  epoch: int) -> Tuple[CollectionReport, Optional[AggregateBatch]]:
        report = self.collect(cids, t, network, ledger, epoch)
        batch = self.aggregate(report.proofs, epoch, ledger) if report.proofs else None
        return report, batch

    def audit(self, epoch: int, ledger: Ledger, rng: random.Random,
              fraction: float = DEFAULT_AUDIT_FRACTION) -> List[str]:
        """Re-verify a random sample of an epoch's members; return failing cids."""
        members = self.retained.get(epoch, [])
        if not members:
            return []
        k = max(1, round(fraction * len(members)))
        failed = []
        for p in rng.sample(members, min(k, len(members))):
            deal = ledger.deal(p.cid)
            if not check_post(p, deal.root, epoch_challenge(ledger, epoch, p.cid), deal.leaf_count, self.backend):
                failed.append(p.cid)
        return failed

    def witness(self, cid: str) -> Optional[MembershipWitness]:
        return self.witnesses.get(cid)


# -- retrieval --------------------------------------------------------------

FetchFn = Callable[[str], Optional[EncryptedReplica]]
WitnessFn = Callable[[str], Optional[MembershipWitness]]
KeyFn = Callable[[int], object]


def covered(cid: str, ledger: Ledger, witness_for: WitnessFn, tiers: Sequence[int] = DEFAULT_TIERS) -> bool:
    """Is ``cid`` covered by a valid on-chain aggregate?"""
    w = witness_for(cid)
    if w is None or not ledger.has_deal(cid) or w.root != ledger.root_of(cid):
        return False
    record = ledger.aggregate_record(w.epoch)
    if record is None:
        return False
    agg = AggregateProof.from_bytes(record)
    return verify_aggregate(agg, ledger) and check_membership(agg, w, tiers)


def retrieve(file_id: str, ledger: Ledger, fetch: FetchFn, witness_for: WitnessFn, key_for: KeyFn,
             version: int | None = None, tiers: Sequence[int] = DEFAULT_TIERS) -> bytes:
    """Rebuild ``file_id`` at ``version`` (default latest) from verified replicas.

    Every increment needs at least one replica covered by a valid aggregate;
    otherwise :class:`RetrieveFailed` is raised before anything is fetched.
    Replicas of an increment are tried in cid order until one decrypts; Plan A
    replicas must also match their committed root.
    """
    chain = ledger.chain(file_id)
    if chain is None:
        raise RetrieveFailed(f"unknown file {file_id}")
    span = chain.reconstruction_span(version)

    plan = []
    for entry in span:
        ok = [(j, cid) for j, cid in enumerate(entry.cids) if covered(cid, ledger, witness_for, tiers)]
        if not ok:
            raise RetrieveFailed(f"version {entry.version_index} has no replica under a valid rollup proof")
        plan.append((entry, sorted(ok, key=lambda jc: jc[1])))

    increments = []
    for entry, candidates in plan:
        last_error: Exception | None = None
        for j, cid in candidates:
            replica = fetch(cid)
            if replica is None:
                last_error = RetrieveFailed(f"replica {cid} unavailable")
                continue
            # Plan B bodies are AEAD-sealed and may arrive re-encrypted; Plan A has no MAC
            if replica.plan is Plan.A and build_tree(replica.ciphertext).root != ledger.root_of(cid):
                last_error = RetrieveFailed(f"replica {cid} does not match its committed root")
                continue
            try:
                inc = Increment.from_bytes(open_replica(replica, key_for(j)))
            except (DecryptFailure, PatchMismatch) as exc:
                last_error = exc
                continue
            if inc.version_index != entry.version_index or inc.kind != entry.kind:
                last_error = PatchMismatch(f"replica {cid} holds the wrong increment")
                continue
            increments.append(inc)
            break
        else:
            if isinstance(last_error, DecryptFailure):
                raise last_error
            raise RetrieveFailed(str(last_error))
    return apply_increments(b"", increments)
