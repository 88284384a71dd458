"""Repeated-trial attack experiments with analytic reference values.

Each trial draws from its own child stream of the experiment seed, so the
trials are independent and the whole experiment is reproducible.

generation
    One replica of ``leaf_count`` leaves; the attacker keeps ``cached_paths``
    chunk/path pairs. A trial issues one fresh challenge answered with a
    ``rounds``-round PoSt (``rounds=1`` is a plain PoS). Expected success
    rate ``(k/N)^t``.

sybil
    ``ctr`` replicas of one increment all land on the attacker's identities;
    it keeps ``keep`` of them. A trial challenges one replica drawn uniformly.
    Expected penalty rate ``(ctr - keep) / ctr``. A separate placement
    experiment measures how often honest selection hands every replica of a
    file to the attacker's identities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from ..crypto.replica import EncryptedReplica, Plan
from ..merkle import CHUNK_SIZE, build_tree
from ..poes import PoSProof, check_pos, check_post
from ..rng import SeedStream
from ..selection import MinerProfile, compute_weights, rand_select
from .actors import GenerationMiner, PutHint, SybilAdversary

KINDS = ("generation", "sybil")
_LATENCY_CAP = 10_000


@dataclass
class AttackStats:
    kind: str
    trials: int
    params: Dict[str, object]
    successes: int = 0  # trials where every challenged proof verified
    expected_rate: float = 0.0
    detection_latency_mean: float = 0.0  # challenges until the first penalty
    latency_runs: int = 0
    captured_fraction: Optional[float] = None
    expected_captured: Optional[float] = None

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def detection_rate(self) -> float:
        return 1.0 - self.success_rate

    def sigma(self, p: Optional[float] = None) -> float:
        """Binomial standard error of the success rate under ``p`` (default the expected rate)."""
        p = self.expected_rate if p is None else p
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["success_rate"] = self.success_rate
        d["detection_rate"] = self.detection_rate
        return d


def _random_replica(rng, leaf_count: int) -> EncryptedReplica:
    data = rng.randbytes(leaf_count * CHUNK_SIZE)
    return EncryptedReplica(Plan.A, leaf_count, len(data), data)


def _generation_trial(rng, miner: GenerationMiner, replica: EncryptedReplica, root: bytes, rounds: int) -> bool:
    c = rng.bytes32()
    com = miner.commitments[replica.cid]
    if rounds == 1:
        proof: PoSProof = miner._pos(c, replica.cid, com)
        return check_pos(proof, root, c, replica.chunk_count)
    post = miner.respond_post(replica.cid, c, rounds, 0)
    return post is not None and check_post(post, root, c, replica.chunk_count)


def generation_experiment(trials: int, leaf_count: int = 16, cached_paths: int = 4, rounds: int = 1,
                          seed: int = 0, latency_runs: int = 200) -> AttackStats:
    if leaf_count < 1 or leaf_count & (leaf_count - 1):
        raise ValueError("leaf_count must be a power of two")
    if not 0 <= cached_paths < leaf_count:
        raise ValueError("need 0 <= cached_paths < leaf_count")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    root_rng = SeedStream(seed, "attack/generation")
    stats = AttackStats("generation", trials,
                        {"leaf_count": leaf_count, "cached_paths": cached_paths, "rounds": rounds, "seed": seed},
                        expected_rate=(cached_paths / leaf_count) ** rounds)
    for i in range(trials):
        rng = root_rng.child(f"trial{i}")
        replica = _random_replica(rng, leaf_count)
        root = build_tree(replica.ciphertext).root
        miner = GenerationMiner("gen", rng.child("miner"), cached_paths)
        miner.accept(replica, PutHint("f", 0, 0), 0)
        stats.successes += _generation_trial(rng, miner, replica, root, rounds)

    # latency: fresh challenge every epoch until the first failed proof
    total = 0
    for i in range(latency_runs):
        rng = root_rng.child(f"latency{i}")
        replica = _random_replica(rng, leaf_count)
        root = build_tree(replica.ciphertext).root
        miner = GenerationMiner("gen", rng.child("miner"), cached_paths)
        miner.accept(replica, PutHint("f", 0, 0), 0)
        n = 1
        while n < _LATENCY_CAP and _generation_trial(rng, miner, replica, root, rounds):
            n += 1
        total += n
    stats.latency_runs = latency_runs
    stats.detection_latency_mean = total / latency_runs if latency_runs else 0.0
    return stats


def _sybil_setup(rng, ctr: int, keep: int, leaf_count: int):
    adv = SybilAdversary("sybil", [f"s{k}" for k in range(ctr)], keep, rng.child("adv"))
    replicas = []
    for j in range(ctr):
        replica = _random_replica(rng, leaf_count)
        adv.accept(replica, PutHint("f", 0, j))
        replicas.append((replica, build_tree(replica.ciphertext).root))
    return adv, replicas


def _sybil_challenge(rng, adv: SybilAdversary, replicas, rounds: int) -> bool:
    replica, root = replicas[rng.randrange(len(replicas))]
    c = rng.bytes32()
    post = adv.respond_post(replica.cid, c, rounds)
    return post is not None and check_post(post, root, c, replica.chunk_count)


def placement_capture(honest: int, honest_pow: float, identities: int, sybil_pow: float, ctr: int,
                      trials: int, seed: int = 0, w: float = 0.5) -> float:
    """Fraction of files whose ``ctr`` replicas all land on sybil identities.

    Placement uses the live selection rule at a fixed height where every miner
    is equally fresh, so only the power term separates them.
    """
    profiles = ([MinerProfile(f"h{i:03d}", honest_pow) for i in range(honest)]
                + [MinerProfile(f"s{i:03d}", sybil_pow) for i in range(identities)])
    dist = compute_weights(profiles, 0, w)
    rng = SeedStream(seed, "attack/placement")
    captured = 0
    for _ in range(trials):
        captured += all(rand_select(dist, rng).startswith("s") for _ in range(ctr))
    return captured / trials if trials else 0.0


def sybil_experiment(trials: int, ctr: int = 3, keep: int = 1, rounds: int = 10, leaf_count: int = 8,
                     seed: int = 0, latency_runs: int = 200, honest: int = 6, honest_pow: float = 1.0,
                     identities: Optional[int] = None, sybil_pow: float = 1.0,
                     placement_trials: int = 2000) -> AttackStats:
    if not 0 <= keep < ctr:
        raise ValueError("need 0 <= keep < ctr")
    root_rng = SeedStream(seed, "attack/sybil")
    identities = ctr if identities is None else identities
    stats = AttackStats("sybil", trials,
                        {"ctr": ctr, "keep": keep, "rounds": rounds, "leaf_count": leaf_count, "seed": seed,
                         "honest": honest, "honest_pow": honest_pow, "identities": identities,
                         "sybil_pow": sybil_pow},
                        expected_rate=keep / ctr)
    for i in range(trials):
        rng = root_rng.child(f"trial{i}")
        adv, replicas = _sybil_setup(rng, ctr, keep, leaf_count)
        stats.successes += _sybil_challenge(rng, adv, replicas, rounds)

    total = 0
    for i in range(latency_runs):
        rng = root_rng.child(f"latency{i}")
        adv, replicas = _sybil_setup(rng, ctr, keep, leaf_count)
        n = 1
        while n < _LATENCY_CAP and _sybil_challenge(rng, adv, replicas, rounds):
            n += 1
        total += n
    stats.latency_runs = latency_runs
    stats.detection_latency_mean = total / latency_runs if latency_runs else 0.0

    share = identities * sybil_pow / (identities * sybil_pow + honest * honest_pow)
    stats.expected_captured = share ** ctr
    stats.captured_fraction = placement_capture(honest, honest_pow, identities, sybil_pow, ctr,
                                                placement_trials, seed)
    return stats


def run_attack_experiment(kind: str, params: Optional[dict] = None, trials: int = 2000,
                          seed: int = 0) -> AttackStats:
    params = dict(params or {})
    if kind == "generation":
        return generation_experiment(trials, seed=seed, **params)
    if kind == "sybil":
        return sybil_experiment(trials, seed=seed, **params)
    raise ValueError(f"unknown attack kind {kind!r}; expected one of {KINDS}")
