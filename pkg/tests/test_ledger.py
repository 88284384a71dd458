import json

import pytest

from filedes.errors import DuplicateAggregate, DuplicateDeal, UnknownCid, UnknownMiner
from filedes.ledger import DealRecord, Ledger
from filedes.selection import compute_weights
from filedes.sim import ScenarioConfig, run_scenario


def _deal(cid="aa" * 32, miner="m0", height=0):
    return DealRecord(cid, miner, bytes(32), height, "a", 4, 1000, "f", 0)


@pytest.fixture(scope="module")
def busy_ledger():
    cfg = ScenarioConfig.from_json({
        "seed": 2, "epochs": 30,
        "clients": {"count": 8, "versions": 12, "version_interval": 1},
        "adversaries": [{"kind": "offline", "offline_from": 10}, {"kind": "generation", "cached_paths": 2}],
    })
    return run_scenario(cfg).ledger


def test_delta_height_tracks_last_deal():
    ledger = Ledger()
    ledger.register_miner("m0")
    ledger.advance_height(7)
    assert ledger.delta_height("m0") == 7
    ledger.record_deal(_deal(height=ledger.height))
    assert ledger.delta_height("m0") == 0
    ledger.advance_height(3)
    assert ledger.delta_height("m0") == 3


def test_delta_height_example():
    ledger = Ledger()
    ledger.register_miner("m0")
    ledger.advance_height(10)
    ledger.record_deal(_deal(height=10))
    ledger.advance_height(5)
    assert ledger.delta_height("m0") == 5


def test_penalty_zeroes_selection_probability():
    ledger = Ledger()
    for m in ("m0", "m1"):
        ledger.register_miner(m)
    ledger.advance_height(5)
    ledger.penalize("m0", "timeout", "x")
    assert compute_weights(ledger.profiles(), ledger.height).as_dict()["m0"] == 0.0
    assert ledger.state.penalties == [{"miner_id": "m0", "reason": "timeout", "cid": "x", "height": 5}]


def test_write_guards():
    ledger = Ledger()
    ledger.register_miner("m0")
    ledger.record_deal(_deal())
    with pytest.raises(DuplicateDeal):
        ledger.record_deal(_deal())
    with pytest.raises(UnknownMiner):
        ledger.record_deal(_deal("bb" * 32, miner="ghost"))
    with pytest.raises(UnknownMiner):
        ledger.penalize("ghost", "timeout")
    with pytest.raises(UnknownCid):
        ledger.deal("cc" * 32)
    ledger.record_aggregate(0, bytes(256))
    with pytest.raises(DuplicateAggregate):
        ledger.record_aggregate(0, bytes(256))
    with pytest.raises(ValueError):
        ledger.advance_height(-1)
    assert ledger.next_free_epoch() == 1


def test_events_are_sequenced_with_height():
    ledger = Ledger()
    ledger.register_miner("m0")
    ledger.advance_height(2)
    ledger.record_deal(_deal(height=2))
    assert [e["seq"] for e in ledger.events] == [0, 1, 2]
    assert [e["height"] for e in ledger.events] == [0, 0, 2]


def test_open_epoch_is_idempotent():
    ledger = Ledger()
    b = ledger.open_epoch(3)
    assert ledger.open_epoch(3) == b
    assert len(ledger.events) == 1


def test_replay_of_long_simulated_log(busy_ledger, tmp_path):
    assert len(busy_ledger.events) >= 500
    path = tmp_path / "events.jsonl"
    busy_ledger.write_events(path)
    replayed = Ledger.from_file(path)
    assert replayed.snapshot() == busy_ledger.snapshot()
    assert replayed.head_digest() == busy_ledger.head_digest()


def test_replay_rejects_reordered_or_inconsistent_logs(busy_ledger):
    events = [json.loads(json.dumps(e)) for e in busy_ledger.events[:50]]
    with pytest.raises(ValueError):
        Ledger.replay(events[1:])
    events[-1]["height"] += 1
    with pytest.raises(ValueError):
        Ledger.replay(events)
    with pytest.raises(ValueError):
        Ledger.replay([{"seq": 0, "height": 0, "type": "mystery"}])


def test_head_digest_changes_with_every_event():
    ledger = Ledger()
    seen = {ledger.head_digest()}
    for i in range(5):
        ledger.register_miner(f"m{i}")
        seen.add(ledger.head_digest())
    assert len(seen) == 6
