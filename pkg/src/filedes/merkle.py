"""Balanced SHA-256 Merkle trees over fixed 256-byte chunks.

Leaves are hashed as ``H(0x00 || chunk)`` and internal nodes as
``H(0x01 || left || right)`` so a leaf can never be confused with an internal
node. Inputs are zero-padded up to a power-of-two chunk count; the padding
chunks are hashed like any other, so the padding is committed to by the root.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .errors import EmptyInput, IndexOutOfRange, MalformedProof

CHUNK_SIZE = 256
HASH_SIZE = 32

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

# direction flag: which side the *sibling* sits on
SIBLING_RIGHT = 0
SIBLING_LEFT = 1


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_leaf(leaf: bytes) -> bytes:
    return sha256(LEAF_PREFIX + leaf)


def hash_node(left: bytes, right: bytes) -> bytes:
    return sha256(NODE_PREFIX + left + right)


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def split_chunks(data: bytes) -> List[bytes]:
    """Split ``data`` into zero-padded 256-byte chunks, power-of-two many."""
    if not data:
        raise EmptyInput("cannot chunk empty input")
    count = next_power_of_two(-(-len(data) // CHUNK_SIZE))
    padded = data.ljust(count * CHUNK_SIZE, b"\x00")
    return [padded[i:i + CHUNK_SIZE] for i in range(0, len(padded), CHUNK_SIZE)]


@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: Tuple[bytes, ...]
    directions: Tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.siblings)

    def to_bytes(self) -> bytes:
        """u32 leaf_index, u8 depth, then depth x (direction byte, 32-byte sibling)."""
        out = bytearray(struct.pack(">IB", self.leaf_index, self.depth))
        for direction, sibling in zip(self.directions, self.siblings):
            out.append(direction)
            out += sibling
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MerklePath":
        path, rest = cls.read(data)
        if rest:
            raise MalformedProof("trailing bytes after Merkle path")
        return path

    @classmethod
    def read(cls, data: bytes) -> Tuple["MerklePath", bytes]:
        """Parse one path from the front of ``data``; return it and the remainder."""
        if len(data) < 5:
            raise MalformedProof("truncated Merkle path header")
        leaf_index, depth = struct.unpack(">IB", data[:5])
        end = 5 + depth * (1 + HASH_SIZE)
        if len(data) < end:
            raise MalformedProof("truncated Merkle path body")
        siblings, directions = [], []
        for pos in range(5, end, 1 + HASH_SIZE):
            if data[pos] not in (SIBLING_RIGHT, SIBLING_LEFT):
                raise MalformedProof("bad direction byte")
            directions.append(data[pos])
            siblings.append(bytes(data[pos + 1:pos + 1 + HASH_SIZE]))
        return cls(leaf_index, tuple(siblings), tuple(directions)), data[end:]


@dataclass(frozen=True)
class MerkleTree:
    """Immutable balanced tree. ``levels[0]`` are leaf hashes, ``levels[-1] == [root]``."""

    levels: Tuple[Tuple[bytes, ...], ...]
    original_length: int

    @classmethod
    def from_leaves(cls, leaves: Sequence[bytes], original_length: int | None = None) -> "MerkleTree":
        if not leaves:
            raise EmptyInput("tree needs at least one leaf")
        if len(leaves) & (len(leaves) - 1):
            raise ValueError(f"leaf count {len(leaves)} is not a power of two")
        level = tuple(hash_leaf(leaf) for leaf in leaves)
        levels = [level]
        while len(level) > 1:
            level = tuple(hash_node(level[i], level[i + 1]) for i in range(0, len(level), 2))
            levels.append(level)
        if original_length is None:
            original_length = sum(len(leaf) for leaf in leaves)
        return cls(tuple(levels), original_length)

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0])

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def build_tree(data: bytes) -> MerkleTree:
    return MerkleTree.from_leaves(split_chunks(data), original_length=len(data))


def prove_path(tree: MerkleTree, leaf_index: int) -> MerklePath:
    if not 0 <= leaf_index < tree.leaf_count:
        raise IndexOutOfRange(f"leaf {leaf_index} outside tree of {tree.leaf_count} leaves")
    siblings, directions = [], []
    index = leaf_index
    for level in tree.levels[:-1]:
        if index & 1:
            siblings.append(level[index - 1])
            directions.append(SIBLING_LEFT)
        else:
            siblings.append(level[index + 1])
            directions.append(SIBLING_RIGHT)
        index >>= 1
    return MerklePath(leaf_index, tuple(siblings), tuple(directions))


def fold_path(leaf: bytes, path: MerklePath) -> bytes:
    node = hash_leaf(leaf)
    for sibling, direction in zip(path.siblings, path.directions):
        node = hash_node(sibling, node) if direction == SIBLING_LEFT else hash_node(node, sibling)
    return node


def verify_path(root: bytes, leaf_index: int, chunk: bytes, path: MerklePath) -> bool:
    """True iff ``chunk`` folds up to ``root`` and the flags spell out ``leaf_index``."""
    if path.leaf_index != leaf_index or len(path.siblings) != len(path.directions):
        return False
    if leaf_index < 0 or leaf_index >> path.depth:
        return False
    for level, direction in enumerate(path.directions):
        if direction != (leaf_index >> level) & 1:
            return False
    if any(len(s) != HASH_SIZE for s in path.siblings):
        return False
    return fold_path(chunk, path) == root
