"""Encrypted replica container and content identifiers.

On-disk layout (big-endian)::

    magic "FDES" | version u8 | plan tag u8 | chunk_count u32 | original_length u64 | ciphertext

``chunk_count`` is the leaf count of the Merkle tree over the ciphertext and
``original_length`` the plaintext length of the increment.
"""

from __future__ import annotations

import enum
import hashlib
import random
import struct
from dataclasses import dataclass

from ..errors import BlockTooLarge, DecryptFailure, EmptyInput, MalformedCiphertext, MalformedReplica
from ..merkle import CHUNK_SIZE, next_power_of_two
from .pre import PreKeyPair, pre_decrypt, pre_encrypt
from .rsa import RsaKeyPair, RsaPublicKey, plan_a_decrypt, plan_a_encrypt

MAGIC = b"FDES"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sBBIQ")
HEADER_SIZE = _HEADER.size


class Plan(str, enum.Enum):
    A = "a"
    B = "b"

    @property
    def tag(self) -> int:
        return 0x41 if self is Plan.A else 0x42

    @classmethod
    def from_tag(cls, tag: int) -> "Plan":
        try:
            return {0x41: cls.A, 0x42: cls.B}[tag]
        except KeyError:
            raise MalformedReplica(f"unknown plan tag {tag:#x}") from None

    @classmethod
    def parse(cls, value) -> "Plan":
        if isinstance(value, Plan):
            return value
        return cls(str(value).lower())


def compute_cid(plan: Plan, ciphertext: bytes) -> str:
    return hashlib.sha256(bytes([plan.tag]) + ciphertext).hexdigest()


@dataclass(frozen=True)
class EncryptedReplica:
    plan: Plan
    chunk_count: int
    original_length: int
    ciphertext: bytes

    @property
    def cid(self) -> str:
        return compute_cid(self.plan, self.ciphertext)

    @property
    def size(self) -> int:
        return HEADER_SIZE + len(self.ciphertext)

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, FORMAT_VERSION, self.plan.tag, self.chunk_count, self.original_length)
        return head + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncryptedReplica":
        if len(data) < HEADER_SIZE:
            raise MalformedReplica("truncated replica header")
        magic, version, tag, chunks, length = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise MalformedReplica("bad magic")
        if version != FORMAT_VERSION:
            raise MalformedReplica(f"unsupported format version {version}")
        return cls(Plan.from_tag(tag), chunks, length, bytes(data[HEADER_SIZE:]))


def make_replica(plan, key_material, increment_bytes: bytes, rng: random.Random | None = None) -> EncryptedReplica:
    """Encrypt one increment into a replica.

    Plan A takes the owner's :class:`RsaKeyPair` (encryption uses the private
    exponent). Plan B takes the recipient public key (a :class:`PreKeyPair`
    or its encoded public key); ``rng`` makes Plan B output reproducible.
    """
    plan = Plan.parse(plan)
    if not increment_bytes:
        raise EmptyInput("increment is empty")
    if plan is Plan.A:
        if not isinstance(key_material, RsaKeyPair):
            raise TypeError("Plan A replicas need an RsaKeyPair")
        ct = plan_a_encrypt(key_material, increment_bytes)
    else:
        ct = pre_encrypt(key_material, increment_bytes, rng=rng)
    chunks = next_power_of_two(-(-len(ct) // CHUNK_SIZE))
    return EncryptedReplica(plan, chunks, len(increment_bytes), ct)


def open_replica(replica: EncryptedReplica, key) -> bytes:
    """Decrypt a replica: Plan A with the public key, Plan B with a PRE secret key."""
    if replica.plan is Plan.A:
        if isinstance(key, RsaKeyPair):
            key = key.public
        if not isinstance(key, RsaPublicKey):
            raise DecryptFailure("Plan A replicas open with an RSA public key")
        try:
            return plan_a_decrypt(key, replica.ciphertext, replica.original_length)
        except (MalformedCiphertext, BlockTooLarge) as exc:
            raise DecryptFailure(str(exc)) from exc
    if not isinstance(key, PreKeyPair):
        raise DecryptFailure("Plan B replicas open with a PRE secret key")
    try:
        plain = pre_decrypt(key, replica.ciphertext)
    except MalformedCiphertext as exc:
        raise DecryptFailure(str(exc)) from exc
    if len(plain) != replica.original_length:
        raise DecryptFailure("plaintext length disagrees with replica header")
    return plain
