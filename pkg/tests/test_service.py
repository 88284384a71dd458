import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from filedes.node import Node
from filedes.service import create_app


@pytest.fixture
def client(tmp_path):
    return TestClient(create_app(tmp_path / "home", rsa_bits=1024))


def _put(client, file_id, data, **kw):
    resp = client.post("/files", json={"file_id": file_id, "data": data.hex(), **kw})
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_put_retrieve_versions(client):
    v0 = bytes(range(256)) * 10
    v1 = v0[:100] + b"new bytes" + v0[109:]
    r0 = _put(client, "dir/a.bin", v0)
    r1 = _put(client, "dir/a.bin", v1)
    assert (r0["version"], r0["kind"], len(r0["cids"])) == (0, "base", 3)
    assert (r1["version"], r1["kind"]) == (1, "delta")
    assert r1["stored_bytes"] < len(v1)
    assert bytes.fromhex(client.get("/files/dir/a.bin").json()["data"]) == v1
    assert bytes.fromhex(client.get("/files/dir/a.bin", params={"version": 0}).json()["data"]) == v0
    status = client.get("/status").json()
    assert status["files"] == {"dir/a.bin": 1} and status["deals"] == 6 and status["penalties"] == 0


def test_plan_b_put_and_retrieve(client):
    r = _put(client, "b", b"plan b content" * 20, plan="b", ctr=2)
    assert len(r["cids"]) == 2
    assert bytes.fromhex(client.get("/files/b").json()["data"]) == b"plan b content" * 20


def test_challenge_prove_verify(client):
    cid = _put(client, "f", b"x" * 3000)["cids"][0]
    ch = client.post("/challenges", json={"cid": cid}).json()
    for rounds in (None, 4):
        proof = client.post("/proofs", json={"cid": cid, "challenge": ch["challenge"], "rounds": rounds}).json()
        res = client.post("/verify", json={"proof": proof["proof"], "root": ch["root"],
                                           "challenge": ch["challenge"]})
        assert res.status_code == 200 and res.json()["valid"]
        assert res.json()["kind"] == ("pos" if rounds is None else "post")
    wrong = client.post("/verify", json={"proof": proof["proof"], "root": ch["root"], "challenge": "00" * 32})
    assert wrong.status_code == 422 and wrong.json()["error"] == "ProofRejected"
    trunc = client.post("/verify", json={"proof": proof["proof"][:-2], "root": ch["root"],
                                         "challenge": ch["challenge"]})
    assert trunc.status_code == 422 and trunc.json()["error"] == "MalformedProof"


def test_rollup_endpoint(client):
    _put(client, "f", b"y" * 1000)
    status = client.get("/status").json()
    epoch = max(status["aggregates"]) + 1
    res = client.post("/rollups", json={"epoch": epoch})
    assert res.status_code == 200
    body = res.json()
    assert body["members"] == 3 and body["tier"] == 8 and len(bytes.fromhex(body["record"])) == 256
    dup = client.post("/rollups", json={"epoch": epoch})
    assert dup.status_code == 409 and dup.json()["error"] == "DuplicateAggregate"


def test_error_mapping(client):
    assert client.post("/challenges", json={"cid": "ab" * 32}).json()["error"] == "UnknownCid"
    assert client.post("/challenges", json={"cid": "ab" * 32}).status_code == 404
    missing = client.get("/files/ghost")
    assert missing.status_code == 404 and missing.json()["error"] == "RetrieveFailed"
    bad = client.post("/files", json={"file_id": "f", "data": "zz"})
    assert bad.status_code == 422 and bad.json()["error"] == "ConfigInvalid"
    malformed = client.post("/files", json={"file_id": "f"})
    assert malformed.status_code == 400 and malformed.json()["error"] == "BadRequest"
    _put(client, "f", b"abc")
    mismatch = client.post("/files", json={"file_id": "f", "data": "00", "plan": "b"})
    assert mismatch.status_code == 422 and mismatch.json()["error"] == "ConfigInvalid"
    # the put above already aggregated epoch 0
    assert client.post("/rollups", json={"epoch": 0}).status_code == 409


def test_state_survives_restart(tmp_path):
    home = tmp_path / "home"
    first = TestClient(create_app(home, rsa_bits=1024))
    _put(first, "keep", b"persistent" * 50)
    head = first.get("/status").json()["head"]
    node = Node(home, rsa_bits=1024)
    assert node.status()["head"] == head
    second = TestClient(create_app(home, node=node))
    assert bytes.fromhex(second.get("/files/keep").json()["data"]) == b"persistent" * 50
    assert second.get("/status").json()["deals"] == 3
