import dataclasses
import random

import pytest
from conftest import raw_replica

from filedes.crypto import EncryptedReplica, Plan, pre_reencrypt, pre_rekeygen
from filedes.errors import DecryptFailure, EmptyBatch, MalformedProof, OversizedBatch, RetrieveFailed, UnknownCid
from filedes.ledger import DealRecord, Ledger
from filedes.poes import ReplicaStore, cycle_prove, setup
from filedes.rollup import (RECORD_SIZE, AggregateProof, MembershipWitness, OpCounter, RollupKey, RollupMiner,
                            aggregate, check_membership, covered, epoch_challenge, retrieve, tier_for,
                            verify_aggregate)

MINERS = ("m0", "m1", "m2", "m3")


class Net:
    """In-memory prover network over per-miner stores."""

    def __init__(self, stores, offline=()):
        self.stores = stores
        self.offline = set(offline)

    def request_post(self, miner_id, cid, c, t):
        if miner_id in self.offline or cid not in self.stores[miner_id]:
            return None
        return cycle_prove(c, t, cid, self.stores[miner_id])


def _posts(n, seed=0):
    rng = random.Random(seed)
    store = ReplicaStore()
    out = []
    for _ in range(n):
        cid = store.put(raw_replica(rng, 4 * 256))
        out.append(cycle_prove(rng.randbytes(32), 2, cid, store))
    return out


@pytest.fixture
def world():
    ledger = Ledger()
    for m in MINERS:
        ledger.register_miner(m)
    stores = {m: ReplicaStore() for m in MINERS}
    rng = random.Random(5)
    cids = []
    for i, m in enumerate(MINERS):
        rep = raw_replica(rng, 8 * 256)
        stores[m].put(rep)
        tree = stores[m].tree(rep.cid)
        ledger.record_deal(DealRecord(rep.cid, m, tree.root, 0, "a", tree.leaf_count, rep.size))
        cids.append(rep.cid)
    miner = RollupMiner("r", RollupKey(b"seed"))
    miner.register(ledger)
    return ledger, stores, miner, cids


def test_tiers():
    assert [tier_for(k) for k in (1, 2, 8, 9, 64, 65, 512)] == [1, 8, 8, 64, 64, 512, 512]
    with pytest.raises(EmptyBatch):
        tier_for(0)
    with pytest.raises(OversizedBatch):
        tier_for(600)


@pytest.mark.parametrize("k", [1, 8, 64, 512])
def test_record_is_constant_size(k):
    batch = aggregate(_posts(k), 3, RollupKey(b"k"))
    raw = batch.proof.to_bytes()
    assert len(raw) == RECORD_SIZE == 256
    assert AggregateProof.from_bytes(raw) == batch.proof
    assert batch.tier == k


def test_empty_and_oversized_batches():
    with pytest.raises(EmptyBatch):
        aggregate([], 0, RollupKey(b"k"))
    with pytest.raises(OversizedBatch):
        aggregate(_posts(600), 0, RollupKey(b"k"))


def test_record_parse_errors():
    raw = aggregate(_posts(1), 0, RollupKey(b"k")).proof.to_bytes()
    with pytest.raises(MalformedProof):
        AggregateProof.from_bytes(raw[:-1])
    with pytest.raises(MalformedProof):
        AggregateProof.from_bytes(raw[:-1] + b"\x01")


def test_verification_cost_is_constant():
    key = RollupKey(b"k")
    ledger = Ledger()
    ledger.register_rollup_miner(key.rollup_id, key.public_key)
    costs = []
    for epoch, k in enumerate((1, 8, 64, 512)):
        batch = aggregate(_posts(k, seed=epoch), epoch, key)
        ledger.record_aggregate(epoch, batch.proof.to_bytes())
        counter = OpCounter()
        assert verify_aggregate(batch.proof, ledger, counter)
        costs.append(counter.total)
    assert len(set(costs)) == 1


def test_membership_honest_and_forged():
    key = RollupKey(b"k")
    posts = _posts(9)
    batch = aggregate(posts[:8], 1, key)
    for cid, w in batch.witnesses.items():
        assert check_membership(batch.proof, w)
        assert MembershipWitness.from_bytes(w.to_bytes()) == w
    w = next(iter(batch.witnesses.values()))
    outsider = posts[8]
    forged = dataclasses.replace(w, cid=outsider.cid)
    assert not check_membership(batch.proof, forged)
    assert not check_membership(batch.proof, dataclasses.replace(w, epoch=2))
    assert not check_membership(batch.proof, dataclasses.replace(w, root=bytes(32)))


def test_flipped_attestation_byte_fails():
    key = RollupKey(b"k")
    ledger = Ledger()
    ledger.register_rollup_miner(key.rollup_id, key.public_key)
    batch = aggregate(_posts(3), 0, key)
    bad = bytearray(batch.proof.attestation)
    bad[0] ^= 1
    forged = dataclasses.replace(batch.proof, attestation=bytes(bad))
    ledger.record_aggregate(0, forged.to_bytes())
    assert not verify_aggregate(forged, ledger)


def test_aggregate_must_match_ledger_record():
    key = RollupKey(b"k")
    ledger = Ledger()
    ledger.register_rollup_miner(key.rollup_id, key.public_key)
    batch = aggregate(_posts(2), 0, key)
    assert not verify_aggregate(batch.proof, ledger)
    ledger.record_aggregate(0, batch.proof.to_bytes())
    assert verify_aggregate(batch.proof, ledger)
    assert not verify_aggregate(dataclasses.replace(batch.proof, member_count=3), ledger)


def test_unknown_signer_rejected():
    ledger = Ledger()
    batch = aggregate(_posts(2), 0, RollupKey(b"nobody"))
    ledger.record_aggregate(0, batch.proof.to_bytes())
    assert not verify_aggregate(batch.proof, ledger)


def test_prepare(world):
    ledger, _, miner, cids = world
    with pytest.raises(UnknownCid):
        miner.prepare("ab" * 32, ledger)
    miner.prepare(cids[0], ledger)
    miner.prepare(cids[0], ledger)
    assert miner.queue == [cids[0]]


def test_duplicate_enqueue_is_one_member(world):
    ledger, stores, miner, cids = world
    for _ in range(3):
        miner.prepare(cids[0], ledger)
    report, batch = miner.run_epoch([cids[0], cids[0], cids[1]], 2, Net(stores), ledger, 0)
    assert batch.proof.member_count == 2 and len(report.proofs) == 2


def test_collect_all_honest(world):
    ledger, stores, miner, cids = world
    report = miner.collect(cids, 3, Net(stores), ledger, 0)
    assert len(report.proofs) == 4 and report.penalties == 0 and not ledger.state.penalties


def test_collect_one_offline(world):
    ledger, stores, miner, cids = world
    report = miner.collect(cids, 3, Net(stores, offline={"m1"}), ledger, 0)
    assert len(report.proofs) == 3
    assert ledger.state.penalties == [{"miner_id": "m1", "reason": "timeout", "cid": cids[1], "height": 0}]


def test_collect_one_tampered_round(world):
    ledger, stores, miner, cids = world

    class Tamper(Net):
        def request_post(self, miner_id, cid, c, t):
            post = super().request_post(miner_id, cid, c, t)
            if miner_id != "m2":
                return post
            rnd = post.rounds[1]
            chunk = bytes([rnd.pos.chunk[0] ^ 1]) + rnd.pos.chunk[1:]
            bad = dataclasses.replace(rnd, pos=dataclasses.replace(rnd.pos, chunk=chunk))
            return dataclasses.replace(post, rounds=post.rounds[:1] + (bad,) + post.rounds[2:])

    report = miner.collect(cids, 3, Tamper(stores), ledger, 0)
    assert len(report.proofs) == 3
    assert [(p["miner_id"], p["reason"]) for p in ledger.state.penalties] == [("m2", "invalid_proof")]


def test_collect_penalizes_offline_and_tampered(world):
    ledger, stores, miner, cids = world
    deal = ledger.deal(cids[3])
    # corrupt every leaf so whichever leaves the epoch challenge selects are wrong
    for leaf in range(deal.leaf_count):
        stores["m3"].corrupt(cids[3], leaf, 1)
    for cid in cids:
        miner.prepare(cid, ledger)
    report, batch = miner.run_epoch(cids, 3, Net(stores, offline={"m2"}), ledger, 0)
    assert report.outcomes[cids[2]] == "timeout"
    assert report.outcomes[cids[3]] == "invalid"
    assert report.outcomes[cids[0]] == report.outcomes[cids[1]] == "ok"
    assert report.penalties == 2
    reasons = {(p["miner_id"], p["reason"]) for p in ledger.state.penalties}
    assert reasons == {("m2", "timeout"), ("m3", "invalid_proof")}
    assert batch.proof.member_count == 2 and batch.tier == 8
    assert miner.queue == [cids[2], cids[3]]
    assert covered(cids[0], ledger, miner.witness)
    assert not covered(cids[2], ledger, miner.witness)


def test_epoch_challenge_depends_on_beacon(world):
    ledger, _, _, cids = world
    assert epoch_challenge(ledger, 0, cids[0]) == epoch_challenge(ledger, 0, cids[0])
    assert epoch_challenge(ledger, 0, cids[0]) != epoch_challenge(ledger, 1, cids[0])
    assert epoch_challenge(ledger, 0, cids[0]) != epoch_challenge(ledger, 0, cids[1])


def test_audit(world):
    ledger, stores, miner, cids = world
    miner.run_epoch(cids, 2, Net(stores), ledger, 0)
    assert miner.audit(0, ledger, random.Random(0), fraction=1.0) == []
    assert miner.audit(5, ledger, random.Random(0)) == []
    # a rollup miner that slipped a bad proof into its batch is caught when sampled
    bad = cycle_prove(b"\x00" * 32, 2, cids[1], stores["m1"])
    miner.retained[0][1] = bad
    assert miner.audit(0, ledger, random.Random(0), fraction=1.0) == [bad.cid]


# -- retrieval --------------------------------------------------------------

class Cluster:
    def __init__(self, n=4):
        self.ledger = Ledger()
        self.stores = {f"m{i}": ReplicaStore() for i in range(n)}
        for m in self.stores:
            self.ledger.register_miner(m)
        self.rollup = RollupMiner("r", RollupKey(b"r"))
        self.rollup.register(self.ledger)
        self.rng = random.Random(1)
        self.epoch = 0

    def put(self, file_id, data, plan, keys, previous=b"", ctr=3):
        def place(m, rep):
            self.stores[m].put(rep)
            return True
        res = setup(file_id, data, ctr, plan, keys, self.ledger, place, self.rng, previous=previous)
        self.rollup.run_epoch(res.cids, 2, Net(self.stores), self.ledger, self.epoch)
        self.epoch += 1
        self.ledger.advance_height()
        return res

    def fetch(self, cid):
        m = self.ledger.deal(cid).miner_id
        return self.stores[m].replica(cid) if cid in self.stores[m] else None


def test_retrieve_versions_plan_a(rsa_keys):
    cl = Cluster()
    v0 = random.Random(2).randbytes(3000)
    v1 = v0[:10] + b"edit" + v0[14:]
    v2 = v1[:2000] + b"inserted" + v1[2000:]
    cl.put("f", v0, Plan.A, rsa_keys)
    cl.put("f", v1, Plan.A, rsa_keys, previous=v0)
    cl.put("f", v2, Plan.A, rsa_keys, previous=v1)
    key_for = lambda j: rsa_keys[j].public  # noqa: E731
    assert retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, key_for) == v2
    for v, expected in enumerate((v0, v1, v2)):
        assert retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, key_for, v) == expected
    with pytest.raises(RetrieveFailed):
        retrieve("nope", cl.ledger, cl.fetch, cl.rollup.witness, key_for)


def test_retrieve_fails_over_to_other_replicas(rsa_keys):
    cl = Cluster()
    data = b"failover" * 300
    res = cl.put("f", data, Plan.A, rsa_keys)
    first = sorted(res.cids)[0]
    cl.stores[cl.ledger.deal(first).miner_id].corrupt(first, 0, 5)
    key_for = lambda j: rsa_keys[j].public  # noqa: E731
    assert retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, key_for) == data
    for cid in res.cids:
        cl.stores[cl.ledger.deal(cid).miner_id].drop(cid)
    with pytest.raises(RetrieveFailed):
        retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, key_for)


def test_corrupt_aggregate_fails_before_fetch(rsa_keys):
    cl = Cluster()
    cl.put("f", b"data" * 100, Plan.A, rsa_keys)
    record = bytearray(cl.ledger.state.aggregates[0])
    record[50] ^= 1
    cl.ledger.state.aggregates[0] = bytes(record)
    fetched = []

    def fetch(cid):
        fetched.append(cid)
        return cl.fetch(cid)
    with pytest.raises(RetrieveFailed):
        retrieve("f", cl.ledger, fetch, cl.rollup.witness, lambda j: rsa_keys[j].public)
    assert fetched == []


def test_plan_b_needs_grant(pre_keys):
    keys, reader = pre_keys[:3], pre_keys[3]
    cl = Cluster()
    data = b"plan b file" * 40
    res = cl.put("f", data, Plan.B, [k.public_key for k in keys])
    assert retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, lambda j: keys[j]) == data
    with pytest.raises(DecryptFailure):
        retrieve("f", cl.ledger, cl.fetch, cl.rollup.witness, lambda j: reader)
    # with a re-encryption grant from each replica key, the reader can open proxied replicas
    grants = {cid: pre_rekeygen(keys[j], reader) for j, cid in enumerate(res.cids)}

    def proxied(cid):
        rep = cl.fetch(cid)
        return EncryptedReplica(rep.plan, rep.chunk_count, rep.original_length,
                                pre_reencrypt(grants[cid], rep.ciphertext))
    assert retrieve("f", cl.ledger, proxied, cl.rollup.witness, lambda j: reader) == data
