"""Deterministic discrete-event simulator.

Time is logical: epoch ``e`` spans ``[e, e + 1)``. Within an epoch the
events run in a fixed order::

    e + 0.1   client puts (new versions)
    e + 0.5   challenge round: rollup collects PoSt proofs and aggregates
    e + 0.8   retrievals, checked against each client's shadow copy
    e + 0.9   bookkeeping: conservation check, metrics row, height + 1

Ties are broken by insertion sequence, so the run is a pure function of the
config. Every random draw comes from a named child of the scenario seed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from ..crypto.pre import PreKeyPair, pre_keygen, pre_rekeygen
from ..crypto.replica import EncryptedReplica, Plan
from ..crypto.rsa import rsa_keygen
from ..errors import DecryptFailure, NoEligibleMiner, PatchMismatch, RetrieveFailed
from ..ledger import Ledger
from ..poes import PoStProof, setup
from ..rng import SeedStream
from ..rollup import RollupKey, RollupMiner, retrieve
from .actors import (GenerationMiner, Network, OfflineMiner, PutHint, RetrievalMiner, StorageMiner,
                     SybilAdversary, SybilIdentity)
from .config import ScenarioConfig
from .metrics import EpochRow, MetricsReport

T_PUT = 0.1
T_CHALLENGE = 0.5
T_RETRIEVE = 0.8
T_CLOSE = 0.9


@dataclass
class Client:
    client_id: str
    plan: Plan
    rng: SeedStream
    keys: list
    reader: Optional[PreKeyPair] = None
    shadow: List[bytes] = field(default_factory=list)  # plaintext of every stored version
    put_epochs: List[int] = field(default_factory=list)
    skipped: int = 0  # scheduled versions whose put found no miner

    @property
    def file_id(self) -> str:
        return f"{self.client_id}/file"

    def next_content(self, size: int, edit_rate: float) -> bytes:
        if not self.shadow:
            return self.rng.randbytes(size)
        data = bytearray(self.shadow[-1])
        span = max(1, round(edit_rate * len(data)))
        start = self.rng.randrange(0, max(1, len(data) - span + 1))
        data[start:start + span] = self.rng.randbytes(span)
        return bytes(data)

    def key_for(self, j: int):
        if self.plan is Plan.A:
            return self.keys[j].public
        return self.reader


class _Prover:
    """ProverNetwork adapter: challenge messages travel over the simulated network."""

    def __init__(self, sim: "Simulator", epoch: int):
        self.sim = sim
        self.epoch = epoch
        self.replies = 0

    def request_post(self, miner_id: str, cid: str, c: bytes, t: int) -> Optional[PoStProof]:
        if not self.sim.network.deliver():
            return None
        reply = self.sim.miners[miner_id].respond_post(cid, c, t, self.epoch)
        if reply is not None:
            self.replies += 1
        return reply


class Simulator:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.root = SeedStream(config.seed, "scenario")
        self.ledger = Ledger()
        p = config.protocol
        self.network = Network(self.root.child("network"), config.miners.drop_probability)
        self.miners: Dict[str, StorageMiner] = {}
        self.sybils: List[SybilAdversary] = []
        self._build_miners()
        self.rollup = RollupMiner("rollup0", RollupKey(self.root.child("rollup").bytes32()), p.tiers)
        self.rollup.register(self.ledger)
        self.retrieval = RetrievalMiner("retrieval0", self.miners, self.network)
        self.clients = [self._make_client(i) for i in range(config.clients.count)]
        self.row = EpochRow()
        self.report = MetricsReport()
        self.last_challenged: Dict[str, int] = {}
        self.last_challenge_epoch = -1
        self.audit_failures = 0
        self.failed_puts = 0
        self._queue: List[Tuple[float, int, Callable[[int], None], int]] = []
        self._seq = 0

    # -- construction -----------------------------------------------------
    def _add(self, miner: StorageMiner, pow: float) -> None:
        self.miners[miner.miner_id] = miner
        self.ledger.register_miner(miner.miner_id, pow)

    def _build_miners(self) -> None:
        spec = self.config.miners
        for i in range(spec.count):
            mid = f"m{i:03d}"
            self._add(StorageMiner(mid, self.root.child(mid)), spec.pow[i % len(spec.pow)])
        for a_i, adv in enumerate(self.config.adversaries):
            for n in range(adv.count):
                base = f"{adv.kind[0]}{a_i}.{n}"
                rng = self.root.child(base)
                if adv.kind == "generation":
                    self._add(GenerationMiner(base, rng, adv.cached_paths), adv.pow)
                elif adv.kind == "offline":
                    self._add(OfflineMiner(base, rng, adv.offline_from), adv.pow)
                else:
                    ids = [f"{base}.{k}" for k in range(adv.identities)]
                    owner = SybilAdversary(base, ids, adv.keep, rng)
                    self.sybils.append(owner)
                    for mid in ids:
                        self._add(SybilIdentity(mid, owner), adv.pow)

    def _make_client(self, i: int) -> Client:
        cc, p = self.config.clients, self.config.protocol
        cid = f"c{i:02d}"
        rng = self.root.child(cid)
        if cc.plan == "mixed":
            plan = Plan.A if i % 2 == 0 else Plan.B
        else:
            plan = Plan.parse(cc.plan)
        if plan is Plan.A:
            keys = [rsa_keygen(p.rsa_bits, seed=rng.child(f"rsa{j}").bytes32()) for j in range(p.ctr)]
            return Client(cid, plan, rng, keys)
        keys = [pre_keygen(rng.child(f"pre{j}").bytes32()) for j in range(p.ctr)]
        reader = pre_keygen(rng.child("reader").bytes32())
        for j, owner in enumerate(keys):
            self.retrieval.grant(pre_rekeygen(owner, reader.public_key, rng.child(f"rk{j}")))
        return Client(cid, plan, rng, keys, reader)

    # -- event queue ------------------------------------------------------
    def schedule(self, time: float, action: Callable[[int], None], epoch: int) -> None:
        heapq.heappush(self._queue, (time, self._seq, action, epoch))
        self._seq += 1

    def run(self) -> MetricsReport:
        cfg = self.config
        for e in range(cfg.epochs):
            self.schedule(e + T_PUT, self._puts, e)
            if e % cfg.protocol.challenge_period == 0:
                self.schedule(e + T_CHALLENGE, self._challenge, e)
            if (e + 1) % cfg.retrieve_every == 0 or e == cfg.epochs - 1:
                self.schedule(e + T_RETRIEVE, self._retrievals, e)
            self.schedule(e + T_CLOSE, self._close, e)
        while self._queue:
            _, _, action, epoch = heapq.heappop(self._queue)
            action(epoch)
        self.report.summary = self._summary()
        return self.report

    # -- epoch phases -----------------------------------------------------
    def _puts(self, epoch: int) -> None:
        cc = self.config.clients
        for client in self.clients:
            v = len(client.shadow) + client.skipped
            if v >= cc.versions or epoch != v * cc.version_interval:
                continue
            self._put(client, epoch)

    def _put(self, client: Client, epoch: int) -> None:
        p = self.config.protocol
        content = client.next_content(self.config.clients.file_size, self.config.clients.edit_rate)
        version = len(client.shadow)
        seen: Dict[str, int] = {}

        def put(miner_id: str, replica: EncryptedReplica) -> bool:
            j = seen.setdefault(replica.cid, len(seen))
            if not self.network.deliver():
                return False
            return self.miners[miner_id].accept(replica, PutHint(client.file_id, version, j), epoch)

        try:
            res = setup(client.file_id, content, p.ctr, client.plan, client.keys, self.ledger, put,
                        client.rng.child(f"put{version}"), previous=client.shadow[-1] if client.shadow else b"",
                        w=p.w, retry_cap=p.retry_cap, rollover=p.rollover)
        except NoEligibleMiner:
            client.skipped += 1
            self.failed_puts += 1
            return
        client.shadow.append(content)
        client.put_epochs.append(epoch)
        self.row.puts += 1
        self.row.deals += len(res.cids)

    def _challenge_set(self) -> List[str]:
        ledger = self.ledger
        live = [cid for cid, d in sorted(ledger.state.deals.items())
                if not ledger.profile(d.miner_id).penalized]
        cap = max(self.config.protocol.tiers)
        live.sort(key=lambda c: (self.last_challenged.get(c, -1), c))
        return sorted(live[:cap])

    def _challenge(self, epoch: int) -> None:
        cids = self._challenge_set()
        if not cids:
            return
        prover = _Prover(self, epoch)
        report, batch = self.rollup.run_epoch(cids, self.config.protocol.rounds, prover, self.ledger, epoch)
        for cid in cids:
            self.last_challenged[cid] = epoch
        self.last_challenge_epoch = epoch
        r = self.row
        r.challenges_issued += len(cids)
        r.proofs_generated += prover.replies
        for cid, outcome in report.outcomes.items():
            if outcome == "ok":
                r.proofs_verified += 1
                continue
            if outcome == "timeout":
                r.penalties_timeout += 1
            else:
                r.proofs_failed += 1
                r.penalties_invalid += 1
            if self.miners[self.ledger.deal(cid).miner_id].kind != "honest":
                r.attack_detections += 1
        if batch is not None:
            r.aggregates += 1
            r.aggregate_members += batch.proof.member_count
            self.audit_failures += len(self.rollup.audit(epoch, self.ledger, self.root.child(f"audit{epoch}"),
                                                         self.config.protocol.audit_fraction))

    def _retrievals(self, epoch: int) -> None:
        for client in self.clients:
            # only versions that have been through a challenge round can be covered
            eligible = [v for v, e in enumerate(client.put_epochs) if e <= self.last_challenge_epoch]
            if not eligible:
                continue
            version = eligible[-1]
            if self._retrieve(client, version, epoch) == client.shadow[version]:
                self.row.retrievals_ok += 1
            else:
                self.row.retrievals_failed += 1

    def _retrieve(self, client: Client, version: int, epoch: int) -> Optional[bytes]:
        chain = self.ledger.chain(client.file_id)
        index = {cid: j for entry in chain.entries for j, cid in enumerate(entry.cids)}

        def fetch(cid: str) -> Optional[EncryptedReplica]:
            holder = self.ledger.deal(cid).miner_id
            if client.plan is Plan.A:
                return self.retrieval.get(cid, holder, epoch)
            owner = client.keys[index[cid]]
            return self.retrieval.get_reenc(cid, holder, owner.key_id, client.reader.key_id, epoch)

        try:
            return retrieve(client.file_id, self.ledger, fetch, self.rollup.witness, client.key_for,
                            version, self.config.protocol.tiers)
        except (RetrieveFailed, DecryptFailure, PatchMismatch):
            return None

    def _close(self, epoch: int) -> None:
        r = self.row
        total = 0
        for mid, miner in self.miners.items():
            used = miner.bytes_used()
            total += used
            if miner.kind in ("honest", "offline"):
                onchain = sum(d.size for d in self.ledger.state.deals.values() if d.miner_id == mid)
                if not used == miner.held_bytes() == onchain:
                    r.conservation_violations += 1
            elif miner.kind == "sybil" and used != miner.held_bytes():
                r.conservation_violations += 1
        r.bytes_stored_total = total
        r.epoch = epoch
        r.height = self.ledger.height
        self.report.rows.append(EpochRow(**vars(r)))
        self.ledger.advance_height(1)

    def _summary(self) -> dict:
        final = self.report.final
        miners = {mid: {"kind": m.kind, "bytes": m.bytes_used(), "replicas": len(m.held_cids()),
                        "penalized": self.ledger.profile(mid).penalized}
                  for mid, m in sorted(self.miners.items())}
        return {
            "schema": 1,
            "seed": self.config.seed,
            "epochs": self.config.epochs,
            "final": {k: getattr(final, k) for k in vars(final)},
            "miners": miners,
            "failed_puts": self.failed_puts,
            "audit_failures": self.audit_failures,
            "network": {"sent": self.network.sent, "dropped": self.network.dropped},
            "ledger_events": len(self.ledger.events),
            "ledger_head": self.ledger.head_digest().hex(),
        }


@dataclass
class RunResult:
    report: MetricsReport
    ledger: Ledger
    simulator: Simulator


def run_scenario(config: ScenarioConfig, out_dir=None) -> RunResult:
    """Run ``config``; with ``out_dir`` also write metrics.csv, summary.json and events.jsonl."""
    sim = Simulator(config)
    report = sim.run()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write(out / "metrics.csv", out / "summary.json")
        sim.ledger.write_events(out / "events.jsonl")
    return RunResult(report, sim.ledger, sim)
