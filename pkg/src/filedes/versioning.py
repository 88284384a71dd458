"""File increments, version chains and the base-rollover policy.

Increments are computed over plaintext: version 0 (and every rollover base)
is a full snapshot, every other version is a byte-level delta against its
predecessor.

Delta stream layout::

    varint target_length
    repeated:
        0x01 COPY    varint src_offset  varint length
        0x02 INSERT  varint length      <length literal bytes>

Varints are unsigned LEB128.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import GapInChain, PatchMismatch

OP_COPY = 0x01
OP_INSERT = 0x02

BASE = "base"
DELTA = "delta"

DEFAULT_ROLLOVER = 16

_BLOCK = 16
_MAX_CANDIDATES = 4
# a copy op costs a few bytes, so very short matches are cheaper as literals
_MIN_MATCH = 12


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, pos: int) -> Tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(data):
            raise PatchMismatch("truncated varint")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise PatchMismatch("varint too long")


def _extend_forward(src: bytes, j: int, tgt: bytes, i: int) -> int:
    n = 0
    limit = min(len(src) - j, len(tgt) - i)
    for step in (4096, 256, 16, 1):
        while n + step <= limit and src[j + n:j + n + step] == tgt[i + n:i + n + step]:
            n += step
    return n


def _extend_backward(src: bytes, j: int, tgt: bytes, i: int, floor: int) -> int:
    n = 0
    limit = min(j, i - floor)
    while n < limit and src[j - n - 1] == tgt[i - n - 1]:
        n += 1
    return n


def make_delta(prev: bytes, next_: bytes) -> bytes:
    """Greedy longest-match copy/insert delta turning ``prev`` into ``next_``."""
    index: Dict[bytes, List[int]] = {}
    for j in range(0, len(prev) - _BLOCK + 1, _BLOCK):
        bucket = index.setdefault(prev[j:j + _BLOCK], [])
        if len(bucket) < _MAX_CANDIDATES:
            bucket.append(j)

    out = bytearray(encode_varint(len(next_)))
    literal_start = 0
    i = 0
    n = len(next_)

    def flush_literal(end: int) -> None:
        if end > literal_start:
            out.append(OP_INSERT)
            out.extend(encode_varint(end - literal_start))
            out.extend(next_[literal_start:end])

    while i + _BLOCK <= n:
        candidates = index.get(next_[i:i + _BLOCK])
        if not candidates:
            i += 1
            continue
        best = None
        for j in candidates:
            fwd = _extend_forward(prev, j, next_, i)
            back = _extend_backward(prev, j, next_, i, literal_start)
            if best is None or fwd + back > best[0]:
                best = (fwd + back, j - back, i - back)
        length, src_start, tgt_start = best
        if length < _MIN_MATCH:
            i += 1
            continue
        flush_literal(tgt_start)
        out.append(OP_COPY)
        out += encode_varint(src_start)
        out += encode_varint(length)
        i = tgt_start + length
        literal_start = i
    flush_literal(n)
    return bytes(out)


def apply_delta(prev: bytes, delta: bytes) -> bytes:
    target_len, pos = decode_varint(delta, 0)
    out = bytearray()
    while pos < len(delta):
        op = delta[pos]
        pos += 1
        if op == OP_COPY:
            offset, pos = decode_varint(delta, pos)
            length, pos = decode_varint(delta, pos)
            if offset + length > len(prev):
                raise PatchMismatch("copy reaches past the end of the source")
            out += prev[offset:offset + length]
        elif op == OP_INSERT:
            length, pos = decode_varint(delta, pos)
            if pos + length > len(delta):
                raise PatchMismatch("truncated literal")
            out += delta[pos:pos + length]
            pos += length
        else:
            raise PatchMismatch(f"unknown opcode {op:#x}")
    if len(out) != target_len:
        raise PatchMismatch(f"patched length {len(out)} != declared {target_len}")
    return bytes(out)


_INC_HEADER = struct.Struct(">3sBI")


@dataclass(frozen=True)
class Increment:
    version_index: int
    payload: bytes
    kind: str = DELTA

    @property
    def is_base(self) -> bool:
        return self.kind == BASE

    @property
    def parent_version(self) -> Optional[int]:
        return None if self.is_base else self.version_index - 1

    def to_bytes(self) -> bytes:
        """Self-describing record: this is what gets encrypted into replicas."""
        return _INC_HEADER.pack(b"FDI", 0 if self.is_base else 1, self.version_index) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Increment":
        if len(data) < _INC_HEADER.size:
            raise PatchMismatch("truncated increment record")
        magic, kind, version = _INC_HEADER.unpack_from(data)
        if magic != b"FDI" or kind not in (0, 1):
            raise PatchMismatch("bad increment record")
        return cls(version, bytes(data[_INC_HEADER.size:]), BASE if kind == 0 else DELTA)


def compute_increment(prev: bytes, next_: bytes, version_index: int | None = None,
                      as_base: bool = False) -> Increment:
    """Increment turning ``prev`` into ``next_``.

    An empty ``prev`` (or ``as_base``) yields a full snapshot; with no explicit
    ``version_index`` a snapshot of an empty predecessor is version 0.
    """
    if not prev or as_base:
        return Increment(0 if version_index is None else version_index, bytes(next_), BASE)
    return Increment(1 if version_index is None else version_index, make_delta(prev, next_), DELTA)


def apply_increment(prev: bytes, inc: Increment) -> bytes:
    return inc.payload if inc.is_base else apply_delta(prev, inc.payload)


def apply_increments(base: bytes, increments: Sequence[Increment]) -> bytes:
    """Replay ``increments`` (ordered, contiguous) on top of ``base``."""
    current = base
    last = None
    for inc in increments:
        if last is not None and inc.version_index != last + 1:
            raise GapInChain(f"version {inc.version_index} does not follow {last}")
        current = apply_increment(current, inc)
        last = inc.version_index
    return current


@dataclass
class ChainEntry:
    version_index: int
    kind: str
    cids: Tuple[str, ...]

    def to_json(self) -> dict:
        return {"version": self.version_index, "kind": self.kind, "cids": list(self.cids)}

    @classmethod
    def from_json(cls, obj: dict) -> "ChainEntry":
        return cls(int(obj["version"]), obj["kind"], tuple(obj["cids"]))


@dataclass
class VersionChain:
    """The CID matrix of one file: row ``i`` lists the replica cids of increment ``i``."""

    file_id: str
    rollover: int = DEFAULT_ROLLOVER
    entries: List[ChainEntry] = field(default_factory=list)

    @property
    def latest_version(self) -> int:
        return len(self.entries) - 1

    @property
    def base_indices(self) -> List[int]:
        return [e.version_index for e in self.entries if e.kind == BASE]

    def append(self, version_index: int, kind: str, cids: Iterable[str]) -> ChainEntry:
        if version_index != len(self.entries):
            raise GapInChain(f"expected version {len(self.entries)}, got {version_index}")
        if version_index == 0 and kind != BASE:
            raise GapInChain("version 0 must be a full snapshot")
        entry = ChainEntry(version_index, kind, tuple(cids))
        self.entries.append(entry)
        return entry

    def base_for(self, version: int) -> int:
        return max(b for b in self.base_indices if b <= version)

    def reconstruction_span(self, version: int | None = None) -> List[ChainEntry]:
        """Entries needed to rebuild ``version``: its nearest base and the deltas after it."""
        if version is None:
            version = self.latest_version
        if not 0 <= version <= self.latest_version:
            raise GapInChain(f"version {version} not in chain of {len(self.entries)}")
        return self.entries[self.base_for(version):version + 1]

    def to_json(self) -> dict:
        return {"file_id": self.file_id, "rollover": self.rollover,
                "entries": [e.to_json() for e in self.entries]}

    @classmethod
    def from_json(cls, obj: dict) -> "VersionChain":
        return cls(obj["file_id"], int(obj["rollover"]), [ChainEntry.from_json(e) for e in obj["entries"]])


def should_rebase(chain: VersionChain) -> bool:
    """Whether the *next* version must be stored as a fresh base.

    The next version lands ``latest + 1 - last_base`` steps from its base; once
    that reaches the rollover limit a new snapshot is due, so no
    reconstruction ever replays more than ``rollover - 1`` deltas.
    """
    if not chain.entries:
        return True
    last_base = chain.base_for(chain.latest_version)
    return chain.latest_version + 1 - last_base >= chain.rollover
