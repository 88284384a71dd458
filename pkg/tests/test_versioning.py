import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filedes.errors import GapInChain, PatchMismatch
from filedes.versioning import (BASE, DELTA, Increment, VersionChain, apply_delta, apply_increments,
                                compute_increment, decode_varint, encode_varint, make_delta, should_rebase)


def test_varint_known_encodings():
    # LEB128 reference values
    assert encode_varint(0) == b"\x00"
    assert encode_varint(127) == b"\x7f"
    assert encode_varint(128) == b"\x80\x01"
    assert encode_varint(300) == b"\xac\x02"
    assert decode_varint(b"\xac\x02", 0) == (300, 2)


@given(st.integers(min_value=0, max_value=2**64))
def test_varint_round_trip(n):
    raw = encode_varint(n)
    assert decode_varint(raw + b"junk", 0) == (n, len(raw))


def test_truncated_varint():
    with pytest.raises(PatchMismatch):
        decode_varint(b"\x80", 0)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=3000), st.binary(max_size=3000))
def test_delta_round_trip(prev, nxt):
    assert apply_delta(prev, make_delta(prev, nxt)) == nxt


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=64, max_size=4000), st.data())
def test_delta_round_trip_on_local_edits(prev, data):
    i = data.draw(st.integers(0, len(prev)))
    j = data.draw(st.integers(i, len(prev)))
    nxt = prev[:i] + data.draw(st.binary(max_size=200)) + prev[j:]
    delta = make_delta(prev, nxt)
    assert apply_delta(prev, delta) == nxt


def test_identical_input_is_tiny():
    data = random.Random(1).randbytes(8192)
    assert len(make_delta(data, data)) < 16


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=64, max_size=5000))
def test_unchanged_input_payload_is_smaller(data):
    inc = compute_increment(data, data, 1)
    assert len(inc.payload) < len(data)
    assert apply_delta(data, inc.payload) == data


def test_base_plus_three_single_byte_edits():
    rng = random.Random(4)
    shadow = bytearray(rng.randbytes(1000))
    incs = [compute_increment(b"", bytes(shadow))]
    for v in range(1, 4):
        prev = bytes(shadow)
        shadow[rng.randrange(len(shadow))] ^= 0xFF
        incs.append(compute_increment(prev, bytes(shadow), v))
    assert apply_increments(b"", incs) == bytes(shadow)
    assert apply_increments(b"base", []) == b"base"


def test_one_byte_change_in_10k():
    data = bytearray(random.Random(2).randbytes(10 * 1024))
    nxt = bytearray(data)
    nxt[5000] ^= 0xFF
    delta = make_delta(bytes(data), bytes(nxt))
    assert len(delta) <= 1024
    assert apply_delta(bytes(data), delta) == bytes(nxt)


def test_delta_against_wrong_base_detected():
    a, b = b"A" * 100, b"A" * 50 + b"B" * 50
    delta = make_delta(a, b)
    with pytest.raises(PatchMismatch):
        apply_delta(b"A" * 10, delta)


def test_increment_record_layout():
    inc = Increment(7, b"payload", DELTA)
    raw = inc.to_bytes()
    assert raw[:3] == b"FDI" and raw[3] == 1 and raw[4:8] == (7).to_bytes(4, "big")
    assert Increment.from_bytes(raw) == inc
    with pytest.raises(PatchMismatch):
        Increment.from_bytes(b"XYZ\x00\x00\x00\x00\x00")


def test_compute_increment_kinds():
    first = compute_increment(b"", b"hello")
    assert first.is_base and first.version_index == 0 and first.payload == b"hello"
    assert first.parent_version is None
    second = compute_increment(b"hello", b"hello world", 1)
    assert second.kind == DELTA and second.parent_version == 0
    assert compute_increment(b"hello", b"x", 5, as_base=True).kind == BASE


def test_fifty_version_edit_script_matches_shadow():
    rng = random.Random(3)
    shadow = [rng.randbytes(2000)]
    for _ in range(49):
        cur = bytearray(shadow[-1])
        op = rng.choice(("overwrite", "insert", "delete"))
        at = rng.randrange(len(cur))
        if op == "overwrite":
            cur[at:at + 20] = rng.randbytes(20)
        elif op == "insert":
            cur[at:at] = rng.randbytes(rng.randint(1, 80))
        else:
            del cur[at:at + rng.randint(1, 60)]
        shadow.append(bytes(cur))
    incs = [compute_increment(b"", shadow[0])]
    incs += [compute_increment(shadow[i - 1], shadow[i], i) for i in range(1, 50)]
    for v in (0, 1, 17, 49):
        assert apply_increments(b"", incs[:v + 1]) == shadow[v]


def test_gap_in_increment_sequence():
    incs = [compute_increment(b"", b"v0"), compute_increment(b"v0", b"v1", 1), compute_increment(b"v1", b"v2", 2)]
    with pytest.raises(GapInChain):
        apply_increments(b"", [incs[0], incs[2]])


def _chain(bases, latest, rollover=16):
    ch = VersionChain("f", rollover)
    for v in range(latest + 1):
        ch.append(v, BASE if v in bases else DELTA, [f"cid{v}"])
    return ch


def test_should_rebase_examples():
    assert should_rebase(VersionChain("empty"))
    assert should_rebase(_chain({0}, 15))
    assert not should_rebase(_chain({0}, 5))
    assert not should_rebase(_chain({0, 16}, 20))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(1, 80))
def test_rollover_bounds_reconstruction_span(rollover, versions):
    ch = VersionChain("f", rollover)
    for v in range(versions):
        ch.append(v, BASE if should_rebase(ch) else DELTA, [])
    for v in range(versions):
        span = ch.reconstruction_span(v)
        assert span[0].kind == BASE
        assert len(span) <= rollover
    assert ch.base_indices == list(range(0, versions, rollover))


def test_chain_append_rules_and_json():
    ch = _chain({0}, 3)
    with pytest.raises(GapInChain):
        ch.append(5, DELTA, [])
    with pytest.raises(GapInChain):
        VersionChain("g").append(0, DELTA, [])
    with pytest.raises(GapInChain):
        ch.reconstruction_span(9)
    assert VersionChain.from_json(ch.to_json()) == ch
    assert [e.version_index for e in ch.reconstruction_span(2)] == [0, 1, 2]
