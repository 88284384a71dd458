"""Simulated DSN participants: storage miners (honest and adversarial), the
retrieval miner, and the lossy message network between them."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..crypto.pre import ReEncKey, pre_reencrypt
from ..crypto.replica import HEADER_SIZE, EncryptedReplica, Plan
from ..errors import AlreadyReEncrypted, MalformedCiphertext
from ..merkle import CHUNK_SIZE, HASH_SIZE, MerklePath, build_tree, prove_path
from ..poes import (TRANSPARENT, PoSProof, PoStProof, ReplicaStore, chain_rounds, challenge_to_leaf,
                    cycle_prove)


def forge_pos(c: bytes, cid: str, root: bytes, leaf_count: int, rng: random.Random) -> PoSProof:
    """Best effort without the data: right leaf index, random chunk and siblings."""
    leaf = challenge_to_leaf(c, root, leaf_count)
    depth = (leaf_count - 1).bit_length()
    siblings = tuple(rng.randbytes(HASH_SIZE) for _ in range(depth))
    directions = tuple((leaf >> level) & 1 for level in range(depth))
    path = MerklePath(leaf, siblings, directions)
    chunk = rng.randbytes(CHUNK_SIZE)
    return PoSProof(cid, root, c, leaf, chunk, path, TRANSPARENT.attest((root, c, leaf), chunk, path))


def forge_post(c: bytes, t: int, cid: str, root: bytes, leaf_count: int, rng: random.Random) -> PoStProof:
    rounds, digest = chain_rounds(c, t, lambda ci: forge_pos(ci, cid, root, leaf_count, rng))
    return PoStProof(cid, root, c, rounds, digest)


@dataclass
class PutHint:
    file_id: str
    version: int
    replica_index: int


class StorageMiner:
    kind = "honest"

    def __init__(self, miner_id: str, rng: random.Random):
        self.miner_id = miner_id
        self.rng = rng
        self.store = ReplicaStore()

    def online(self, epoch: int) -> bool:
        return True

    def accept(self, replica: EncryptedReplica, hint: PutHint, epoch: int) -> bool:
        if not self.online(epoch):
            return False
        self.store.put(replica)
        return True

    def respond_post(self, cid: str, c: bytes, t: int, epoch: int) -> Optional[PoStProof]:
        if not self.online(epoch) or cid not in self.store:
            return None
        return cycle_prove(c, t, cid, self.store)

    def serve(self, cid: str, epoch: int) -> Optional[EncryptedReplica]:
        if not self.online(epoch) or cid not in self.store:
            return None
        return self.store.replica(cid)

    def bytes_used(self) -> int:
        return self.store.bytes_used()

    def held_bytes(self) -> int:
        """Independent recount of what is physically held (conservation check)."""
        return sum(HEADER_SIZE + len(self.store.item(c).data) for c in self.held_cids())

    def held_cids(self) -> List[str]:
        return self.store.cids()


class OfflineMiner(StorageMiner):
    kind = "offline"

    def __init__(self, miner_id: str, rng: random.Random, offline_from: int):
        super().__init__(miner_id, rng)
        self.offline_from = offline_from

    def online(self, epoch: int) -> bool:
        return epoch < self.offline_from


@dataclass
class _Commitment:
    root: bytes
    leaf_count: int
    size: int
    cached: Dict[int, Tuple[bytes, MerklePath]] = field(default_factory=dict)


class GenerationMiner(StorageMiner):
    """Keeps ``cached_paths`` leaf/path pairs per replica and discards the rest."""

    kind = "generation"

    def __init__(self, miner_id: str, rng: random.Random, cached_paths: int):
        super().__init__(miner_id, rng)
        self.cached_paths = cached_paths
        self.commitments: Dict[str, _Commitment] = {}

    def accept(self, replica: EncryptedReplica, hint: PutHint, epoch: int) -> bool:
        tree = build_tree(replica.ciphertext)
        com = _Commitment(tree.root, tree.leaf_count, replica.size)
        chunks = replica.ciphertext.ljust(tree.leaf_count * CHUNK_SIZE, b"\x00")
        for leaf in sorted(self.rng.sample(range(tree.leaf_count), min(self.cached_paths, tree.leaf_count))):
            com.cached[leaf] = (chunks[leaf * CHUNK_SIZE:(leaf + 1) * CHUNK_SIZE], prove_path(tree, leaf))
        self.commitments[replica.cid] = com
        return True

    def _pos(self, c: bytes, cid: str, com: _Commitment) -> PoSProof:
        leaf = challenge_to_leaf(c, com.root, com.leaf_count)
        if leaf in com.cached:
            chunk, path = com.cached[leaf]
            return PoSProof(cid, com.root, c, leaf, chunk, path, TRANSPARENT.attest((com.root, c, leaf), chunk, path))
        return forge_pos(c, cid, com.root, com.leaf_count, self.rng)

    def respond_post(self, cid: str, c: bytes, t: int, epoch: int) -> Optional[PoStProof]:
        com = self.commitments.get(cid)
        if com is None:
            return None
        rounds, digest = chain_rounds(c, t, lambda ci: self._pos(ci, cid, com))
        return PoStProof(cid, com.root, c, rounds, digest)

    def serve(self, cid: str, epoch: int) -> Optional[EncryptedReplica]:
        return None

    def bytes_used(self) -> int:
        return sum(len(com.cached) * (CHUNK_SIZE + 5 + 33 * (com.leaf_count.bit_length() - 1)) + 32
                   for com in self.commitments.values())

    def held_bytes(self) -> int:
        return self.bytes_used()

    def held_cids(self) -> List[str]:
        return []


class SybilAdversary:
    """One operator behind several registered identities.

    Of the replicas of any one increment that land on its identities it keeps
    the first ``keep`` and throws the rest away, answering challenges on the
    dropped ones with forged proofs.
    """

    def __init__(self, name: str, identities: List[str], keep: int, rng: random.Random):
        self.name = name
        self.identities = identities
        self.keep = keep
        self.rng = rng
        self.store = ReplicaStore()
        self.dropped: Dict[str, _Commitment] = {}
        self.groups: Dict[Tuple[str, int], int] = {}

    def accept(self, replica: EncryptedReplica, hint: PutHint) -> bool:
        key = (hint.file_id, hint.version)
        kept = self.groups.get(key, 0)
        if kept < self.keep:
            self.store.put(replica)
            self.groups[key] = kept + 1
        else:
            tree = build_tree(replica.ciphertext)
            self.dropped[replica.cid] = _Commitment(tree.root, tree.leaf_count, replica.size)
        return True

    def respond_post(self, cid: str, c: bytes, t: int) -> Optional[PoStProof]:
        if cid in self.store:
            return cycle_prove(c, t, cid, self.store)
        com = self.dropped.get(cid)
        if com is None:
            return None
        return forge_post(c, t, cid, com.root, com.leaf_count, self.rng)


class SybilIdentity(StorageMiner):
    kind = "sybil"

    def __init__(self, miner_id: str, owner: SybilAdversary):
        super().__init__(miner_id, owner.rng)
        self.owner = owner
        self.cids: List[str] = []

    def accept(self, replica: EncryptedReplica, hint: PutHint, epoch: int) -> bool:
        self.cids.append(replica.cid)
        return self.owner.accept(replica, hint)

    def respond_post(self, cid: str, c: bytes, t: int, epoch: int) -> Optional[PoStProof]:
        if cid not in self.cids:
            return None
        return self.owner.respond_post(cid, c, t)

    def serve(self, cid: str, epoch: int) -> Optional[EncryptedReplica]:
        if cid in self.cids and cid in self.owner.store:
            return self.owner.store.replica(cid)
        return None

    def held_cids(self) -> List[str]:
        return [c for c in self.cids if c in self.owner.store]

    def bytes_used(self) -> int:
        return sum(self.owner.store.item(c).replica.size for c in self.held_cids())

    def held_bytes(self) -> int:
        return sum(HEADER_SIZE + len(self.owner.store.item(c).data) for c in self.held_cids())


class Network:
    """Reliable in-order delivery, except each message is lost with ``drop_probability``."""

    def __init__(self, rng: random.Random, drop_probability: float = 0.0):
        self.rng = rng
        self.drop_probability = drop_probability
        self.sent = 0
        self.dropped = 0

    def deliver(self) -> bool:
        self.sent += 1
        if self.drop_probability and self.rng.random() < self.drop_probability:
            self.dropped += 1
            return False
        return True


class RetrievalMiner:
    """Serves ``Get`` and, for Plan B, ``GetReEnc`` using granted re-encryption keys."""

    def __init__(self, name: str, miners: Dict[str, StorageMiner], network: Network):
        self.name = name
        self.miners = miners
        self.network = network
        self.grants: Dict[Tuple[bytes, bytes], ReEncKey] = {}

    def grant(self, rk: ReEncKey) -> None:
        self.grants[(rk.source_id, rk.target_id)] = rk

    def get(self, cid: str, holder: str, epoch: int) -> Optional[EncryptedReplica]:
        miner = self.miners.get(holder)
        if miner is None or not self.network.deliver():
            return None
        return miner.serve(cid, epoch)

    def get_reenc(self, cid: str, holder: str, source_id: bytes, target_id: bytes,
                  epoch: int) -> Optional[EncryptedReplica]:
        replica = self.get(cid, holder, epoch)
        if replica is None or replica.plan is not Plan.B:
            return replica
        rk = self.grants.get((source_id, target_id))
        if rk is None:
            # no permission: hand back the ciphertext untransformed
            return replica
        try:
            ct = pre_reencrypt(rk, replica.ciphertext)
        except (AlreadyReEncrypted, MalformedCiphertext):
            return None
        return EncryptedReplica(replica.plan, replica.chunk_count, replica.original_length, ct)
