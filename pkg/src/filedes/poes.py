"""Proof of Encrypted Storage: Setup, Prove (PoS), CycleProve (PoSt), Verify.

The succinct-argument layer is pluggable through :class:`ArgumentBackend`.
The bundled :class:`TransparentBackend` simply discloses the Merkle witness:
it is complete and sound but neither zero-knowledge nor constant size.

PoSt rounds are hash-chained. With ``digest_0 = 0^32``::

    c'_i     = H(digest_{i-1} || c || u32(i))
    digest_i = H(digest_{i-1} || serialized PoS of round i)

Proof wire format (big-endian, length prefixes are u32)::

    PoS : 0x01 | cid 32 | root 32 | challenge 32 | leaf_index u32
               | len chunk | path record | len argument
    PoSt: 0x02 | cid 32 | root 32 | challenge 32 | rounds u32
               | rounds x (i u32 | c'_i 32 | len PoS) | chain_digest 32
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

from .crypto.replica import EncryptedReplica, Plan, make_replica
from .errors import MalformedProof, NotStored, ZeroRounds
from .ledger import DealRecord, Ledger
from .merkle import CHUNK_SIZE, HASH_SIZE, MerklePath, MerkleTree, build_tree, prove_path, verify_path
from .selection import DEFAULT_RETRY_CAP, DEFAULT_W, compute_weights, select_with_retry
from .versioning import DEFAULT_ROLLOVER, VersionChain, compute_increment, should_rebase

ZERO32 = bytes(32)
DEFAULT_ROUNDS = 10

TAG_POS = 0x01
TAG_POST = 0x02


def H(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


def challenge_to_leaf(c: bytes, rt: bytes, leaf_count: int) -> int:
    if leaf_count < 1 or leaf_count & (leaf_count - 1):
        raise ValueError(f"leaf_count {leaf_count} is not a power of two")
    return int.from_bytes(H(c, rt), "big") % leaf_count


def round_challenge(prev_digest: bytes, c: bytes, i: int) -> bytes:
    return H(prev_digest, c, struct.pack(">I", i))


# -- argument backends ------------------------------------------------------

Statement = Tuple[bytes, bytes, int]  # (root, challenge, leaf_index)


class ArgumentBackend(Protocol):
    def attest(self, statement: Statement, chunk: bytes, path: MerklePath) -> bytes: ...

    def check(self, statement: Statement, attestation: bytes) -> bool: ...


class TransparentBackend:
    """Reference backend: the attestation *is* the witness."""

    def attest(self, statement: Statement, chunk: bytes, path: MerklePath) -> bytes:
        return struct.pack(">I", len(chunk)) + chunk + path.to_bytes()

    def check(self, statement: Statement, attestation: bytes) -> bool:
        root, _, leaf_index = statement
        try:
            (n,) = struct.unpack(">I", attestation[:4])
            chunk = attestation[4:4 + n]
            if len(chunk) != n:
                return False
            path = MerklePath.from_bytes(attestation[4 + n:])
        except (struct.error, MalformedProof):
            return False
        return verify_path(root, leaf_index, chunk, path)


TRANSPARENT = TransparentBackend()


# -- proofs -----------------------------------------------------------------

def _cid_bytes(cid: str) -> bytes:
    raw = bytes.fromhex(cid)
    if len(raw) != 32:
        raise ValueError("cid must be 32 bytes of hex")
    return raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedProof("truncated proof")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def path(self) -> MerklePath:
        path, rest = MerklePath.read(self.data[self.pos:])
        self.pos = len(self.data) - len(rest)
        return path

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedProof("trailing bytes after proof")


@dataclass(frozen=True)
class PoSProof:
    cid: str
    root: bytes
    challenge: bytes
    leaf_index: int
    chunk: bytes
    path: MerklePath
    argument: bytes

    def to_bytes(self) -> bytes:
        return (bytes([TAG_POS]) + _cid_bytes(self.cid) + self.root + self.challenge
                + struct.pack(">II", self.leaf_index, len(self.chunk)) + self.chunk
                + self.path.to_bytes() + struct.pack(">I", len(self.argument)) + self.argument)

    @classmethod
    def _read(cls, r: _Reader) -> "PoSProof":
        if r.take(1) != bytes([TAG_POS]):
            raise MalformedProof("expected PoS tag")
        cid = r.take(32).hex()
        root, challenge = r.take(32), r.take(32)
        leaf_index = r.u32()
        chunk = r.blob()
        path = r.path()
        argument = r.blob()
        return cls(cid, root, challenge, leaf_index, chunk, path, argument)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PoSProof":
        r = _Reader(data)
        proof = cls._read(r)
        r.done()
        return proof


@dataclass(frozen=True)
class PoStRound:
    index: int
    challenge: bytes
    pos: PoSProof


@dataclass(frozen=True)
class PoStProof:
    cid: str
    root: bytes
    initial_challenge: bytes
    rounds: Tuple[PoStRound, ...]
    chain_digest: bytes

    def to_bytes(self) -> bytes:
        out = bytearray([TAG_POST])
        out += _cid_bytes(self.cid) + self.root + self.initial_challenge
        out += struct.pack(">I", len(self.rounds))
        for rnd in self.rounds:
            pos = rnd.pos.to_bytes()
            out += struct.pack(">I", rnd.index) + rnd.challenge + struct.pack(">I", len(pos)) + pos
        out += self.chain_digest
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PoStProof":
        r = _Reader(data)
        if r.take(1) != bytes([TAG_POST]):
            raise MalformedProof("expected PoSt tag")
        cid = r.take(32).hex()
        root, c = r.take(32), r.take(32)
        rounds = []
        for _ in range(r.u32()):
            index = r.u32()
            challenge = r.take(32)
            pos = PoSProof.from_bytes(r.blob())
            rounds.append(PoStRound(index, challenge, pos))
        digest = r.take(32)
        r.done()
        return cls(cid, root, c, tuple(rounds), digest)


Proof = Union[PoSProof, PoStProof]


def load_proof(data: bytes) -> Proof:
    if not data:
        raise MalformedProof("empty proof")
    if data[0] == TAG_POS:
        return PoSProof.from_bytes(data)
    if data[0] == TAG_POST:
        return PoStProof.from_bytes(data)
    raise MalformedProof(f"unknown proof tag {data[0]:#x}")


# -- storage-miner side -----------------------------------------------------

@dataclass
class StoredReplica:
    replica: EncryptedReplica
    data: bytearray  # ciphertext as currently on disk
    tree: MerkleTree  # commitment computed when the replica was accepted


class ReplicaStore:
    """A miner's local disk. The Merkle tree is built once, when a replica is stored."""

    def __init__(self):
        self._items: Dict[str, StoredReplica] = {}

    def put(self, replica: EncryptedReplica) -> str:
        cid = replica.cid
        self._items[cid] = StoredReplica(replica, bytearray(replica.ciphertext), build_tree(replica.ciphertext))
        return cid

    def __contains__(self, cid: str) -> bool:
        return cid in self._items

    def __len__(self) -> int:
        return len(self._items)

    def cids(self) -> List[str]:
        return sorted(self._items)

    def item(self, cid: str) -> StoredReplica:
        try:
            return self._items[cid]
        except KeyError:
            raise NotStored(cid) from None

    def replica(self, cid: str) -> EncryptedReplica:
        """Replica as currently stored (reflects any on-disk corruption)."""
        it = self.item(cid)
        return EncryptedReplica(it.replica.plan, it.replica.chunk_count, it.replica.original_length,
                                bytes(it.data))

    def tree(self, cid: str) -> MerkleTree:
        return self.item(cid).tree

    def chunk(self, cid: str, leaf_index: int) -> bytes:
        data = self.item(cid).data
        return bytes(data[leaf_index * CHUNK_SIZE:(leaf_index + 1) * CHUNK_SIZE]).ljust(CHUNK_SIZE, b"\x00")

    def corrupt(self, cid: str, leaf_index: int, byte_offset: int = 0) -> None:
        """Flip one bit inside chunk ``leaf_index`` (test and adversary helper)."""
        it = self.item(cid)
        pos = leaf_index * CHUNK_SIZE + byte_offset
        if pos >= len(it.data):
            # padding chunk: materialize it so the flip lands on disk
            it.data.extend(bytes(pos + 1 - len(it.data)))
        it.data[pos] ^= 0x01

    def drop(self, cid: str) -> None:
        self._items.pop(cid, None)

    def bytes_used(self) -> int:
        return sum(it.replica.size for it in self._items.values())


def prove(c: bytes, cid: str, store: ReplicaStore, backend: ArgumentBackend = TRANSPARENT) -> PoSProof:
    tree = store.tree(cid)
    leaf = challenge_to_leaf(c, tree.root, tree.leaf_count)
    chunk = store.chunk(cid, leaf)
    path = prove_path(tree, leaf)
    argument = backend.attest((tree.root, c, leaf), chunk, path)
    return PoSProof(cid, tree.root, c, leaf, chunk, path, argument)


def chain_rounds(c: bytes, t: int, make_pos: Callable[[bytes], PoSProof]) -> Tuple[Tuple[PoStRound, ...], bytes]:
    """Run the PoSt hash chain, asking ``make_pos`` for each round's PoS."""
    digest = ZERO32
    rounds = []
    for i in range(1, t + 1):
        ci = round_challenge(digest, c, i)
        pos = make_pos(ci)
        rounds.append(PoStRound(i, ci, pos))
        digest = H(digest, pos.to_bytes())
    return tuple(rounds), digest


def cycle_prove(c: bytes, t: int, cid: str, store: ReplicaStore,
                backend: ArgumentBackend = TRANSPARENT) -> PoStProof:
    if t < 1:
        raise ZeroRounds("a PoSt needs at least one round")
    tree = store.tree(cid)
    rounds, digest = chain_rounds(c, t, lambda ci: prove(ci, cid, store, backend))
    return PoStProof(cid, tree.root, c, rounds, digest)


# -- verifier side ----------------------------------------------------------

def check_pos(proof: PoSProof, rt: bytes, c: bytes, leaf_count: int | None = None,
              backend: ArgumentBackend = TRANSPARENT) -> bool:
    """Side-effect-free PoS check against root ``rt`` and challenge ``c``."""
    if proof.root != rt or proof.challenge != c:
        return False
    depth = proof.path.depth
    if leaf_count is not None and leaf_count != 1 << depth:
        return False
    if len(proof.chunk) != CHUNK_SIZE:
        return False
    if proof.leaf_index != challenge_to_leaf(c, rt, 1 << depth):
        return False
    if not verify_path(rt, proof.leaf_index, proof.chunk, proof.path):
        return False
    return backend.check((rt, c, proof.leaf_index), proof.argument)


def check_post(proof: PoStProof, rt: bytes, c: bytes, leaf_count: int | None = None,
               backend: ArgumentBackend = TRANSPARENT) -> bool:
    if proof.root != rt or proof.initial_challenge != c or not proof.rounds:
        return False
    digest = ZERO32
    for expected, rnd in enumerate(proof.rounds, start=1):
        if rnd.index != expected:
            return False
        ci = round_challenge(digest, c, expected)
        if rnd.challenge != ci or rnd.pos.cid != proof.cid:
            return False
        if not check_pos(rnd.pos, rt, ci, leaf_count, backend):
            return False
        digest = H(digest, rnd.pos.to_bytes())
    return digest == proof.chain_digest


def check_proof(proof: Proof, rt: bytes, c: bytes, leaf_count: int | None = None,
                backend: ArgumentBackend = TRANSPARENT) -> bool:
    if isinstance(proof, PoStProof):
        return check_post(proof, rt, c, leaf_count, backend)
    return check_pos(proof, rt, c, leaf_count, backend)


def verify(proof: Proof, rt: bytes, c: bytes, ledger: Ledger | None = None,
           backend: ArgumentBackend = TRANSPARENT, miner_id: str | None = None) -> bool:
    """Check a PoS/PoSt; on failure penalize the responsible miner on ``ledger``.

    The miner is taken from ``miner_id`` or, failing that, from the deal
    recorded for ``proof.cid``. The deal also pins the expected leaf count.
    """
    deal = ledger.state.deals.get(proof.cid) if ledger is not None else None
    ok = check_proof(proof, rt, c, deal.leaf_count if deal else None, backend)
    if not ok and ledger is not None:
        culprit = miner_id or (deal.miner_id if deal else None)
        if culprit is not None:
            ledger.penalize(culprit, "invalid_proof", proof.cid)
    return ok


# -- client side: setup -----------------------------------------------------

PutFn = Callable[[str, EncryptedReplica], bool]


@dataclass
class SetupResult:
    file_id: str
    version: int
    kind: str
    cids: List[str]
    miners: List[str]
    increment_size: int
    stored_bytes: int = 0
    replicas: List[EncryptedReplica] = field(default_factory=list)


def setup(file_id: str, new_version: bytes, ctr: int, plan, keys: Sequence, ledger: Ledger,
          put: PutFn, rng: random.Random, previous: bytes = b"", w: float = DEFAULT_W,
          retry_cap: int = DEFAULT_RETRY_CAP, rollover: int = DEFAULT_ROLLOVER) -> SetupResult:
    """Store a new version of ``file_id``: increment, encrypt ``ctr`` ways, place, register.

    ``keys[j]`` encrypts replica ``j`` (RSA key pairs for Plan A, PRE public
    keys for Plan B). ``previous`` is the client's copy of the latest stored
    version, required unless this version becomes a base.
    """
    if ctr < 1:
        raise ValueError("ctr must be at least 1")
    if len(keys) < ctr:
        raise ValueError(f"need {ctr} keys, got {len(keys)}")
    plan = Plan.parse(plan)
    chain = ledger.chain(file_id) or VersionChain(file_id, rollover)
    version = len(chain.entries)
    if should_rebase(chain):
        inc = compute_increment(b"", new_version, version)
    else:
        if not previous:
            raise ValueError("previous version bytes are required for a delta")
        inc = compute_increment(previous, new_version, version)
    payload = inc.to_bytes()

    cids, placed, replicas = [], [], []
    for j in range(ctr):
        replica = make_replica(plan, keys[j], payload, rng=rng)
        cid = replica.cid
        if cid in cids or ledger.has_deal(cid):
            raise ValueError("replica keys must be distinct")
        root_tree = build_tree(replica.ciphertext)
        dist = compute_weights(ledger.profiles(), ledger.height, w)
        miner = select_with_retry(dist, rng, lambda m, rep=replica: put(m, rep), retry_cap)
        ledger.record_deal(DealRecord(cid, miner, root_tree.root, ledger.height, plan.value,
                                      root_tree.leaf_count, replica.size, file_id, version))
        cids.append(cid)
        placed.append(miner)
        replicas.append(replica)
    ledger.record_version(file_id, version, inc.kind, cids, chain.rollover)
    return SetupResult(file_id, version, inc.kind, cids, placed, len(inc.payload),
                       sum(r.size for r in replicas), replicas)
