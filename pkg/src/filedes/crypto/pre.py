"""Plan B: unidirectional, single-hop proxy re-encryption.

Hybrid construction. The payload is sealed with ChaCha20-Poly1305 under a
fresh key derived from a key-encapsulation "capsule"; only the capsule is ever
transformed by a proxy. The capsule scheme is an Umbral-style ElGamal KEM over
the order-q subgroup of the 2048-bit RFC 3526 MODP group (g = 2):

    Enc(pk_A):   E = g^r, V = g^u, s = u + r*H(E, V);   K = KDF(pk_A^(r+u))
    ReKeyGen:    X = g^x, d = H(X, pk_B, pk_B^x);        rk = a / d  (mod q)
    ReEnc(rk):   E' = E^rk, V' = V^rk                    (keeps X for the target)
    Dec_B:       d = H(X, pk_B, X^b);  K = KDF((E' V')^d)

The symmetric key never appears in any serialized ciphertext. A re-encrypted
ciphertext is tagged as level 2 and refused by ``pre_reencrypt``.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass

import gmpy2
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from ..errors import AlreadyReEncrypted, DecryptFailure, EmptyInput, MalformedCiphertext
from ..rng import SeedStream

P = int(
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74"
    "020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1437"
    "4fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed"
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf05"
    "98da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb"
    "9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3b"
    "e39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf695581718"
    "3995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffffff",
    16,
)
Q = (P - 1) // 2
G = 2
ELEMENT_BYTES = 256
ID_BYTES = 32
NONCE_BYTES = 12
LEVEL_FIRST = 1
LEVEL_REENCRYPTED = 2
_AAD = b"filedes.planb.v1"


def _exp(base: int, exponent: int) -> int:
    return int(gmpy2.powmod(base, exponent, P))


def _enc(x: int) -> bytes:
    return x.to_bytes(ELEMENT_BYTES, "big")


def _hash_scalar(domain: bytes, *elements: int) -> int:
    h = hashlib.shake_256(domain + b"".join(_enc(e) for e in elements))
    return int.from_bytes(h.digest(ELEMENT_BYTES + 32), "big") % Q or 1


def _kdf(point: int) -> bytes:
    return hashlib.sha256(b"filedes.planb.kdf" + _enc(point)).digest()


def _scalar(rng: random.Random) -> int:
    return rng.randrange(1, Q)


def _default_rng(rng: random.Random | None) -> random.Random:
    return rng if rng is not None else secrets.SystemRandom()


def key_id(public: int) -> bytes:
    return hashlib.sha256(b"filedes.planb.id" + _enc(public)).digest()


@dataclass(frozen=True)
class PreKeyPair:
    secret: int
    public: int

    @property
    def public_key(self) -> bytes:
        return _enc(self.public)

    @property
    def secret_key(self) -> bytes:
        return _enc(self.secret)

    @property
    def key_id(self) -> bytes:
        return key_id(self.public)

    def to_bytes(self) -> bytes:
        return b"PREK" + self.secret_key + self.public_key

    @classmethod
    def from_bytes(cls, data: bytes) -> "PreKeyPair":
        if len(data) != 4 + 2 * ELEMENT_BYTES or data[:4] != b"PREK":
            raise MalformedCiphertext("bad PRE key record")
        secret = int.from_bytes(data[4:4 + ELEMENT_BYTES], "big")
        public = int.from_bytes(data[4 + ELEMENT_BYTES:], "big")
        return cls(secret, public)


@dataclass(frozen=True)
class ReEncKey:
    source_id: bytes
    target_id: bytes
    ephemeral: int  # X = g^x
    rk: int

    def to_bytes(self) -> bytes:
        return b"PRER" + self.source_id + self.target_id + _enc(self.ephemeral) + _enc(self.rk)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ReEncKey":
        if len(data) != 4 + 2 * ID_BYTES + 2 * ELEMENT_BYTES or data[:4] != b"PRER":
            raise MalformedCiphertext("bad re-encryption key record")
        pos = 4
        source, target = data[pos:pos + 32], data[pos + 32:pos + 64]
        pos += 64
        x = int.from_bytes(data[pos:pos + ELEMENT_BYTES], "big")
        rk = int.from_bytes(data[pos + ELEMENT_BYTES:], "big")
        return cls(source, target, x, rk)


def pre_keygen(seed: bytes | None = None) -> PreKeyPair:
    rng = SeedStream(seed, "pre-keygen") if seed is not None else secrets.SystemRandom()
    a = _scalar(rng)
    return PreKeyPair(a, _exp(G, a))


def _as_public(pk) -> int:
    if isinstance(pk, PreKeyPair):
        return pk.public
    if isinstance(pk, (bytes, bytearray)):
        return int.from_bytes(pk, "big")
    return int(pk)


def _check_element(x: int) -> None:
    # membership in the prime-order subgroup
    if not 1 < x < P - 1 or _exp(x, Q) != 1:
        raise MalformedCiphertext("value is not a subgroup element")


def pre_rekeygen(sk_a: PreKeyPair, pk_b, rng: random.Random | None = None) -> ReEncKey:
    rng = _default_rng(rng)
    pub_b = _as_public(pk_b)
    _check_element(pub_b)
    x = _scalar(rng)
    big_x = _exp(G, x)
    d = _hash_scalar(b"filedes.planb.dh", big_x, pub_b, _exp(pub_b, x))
    rk = sk_a.secret * pow(d, -1, Q) % Q
    return ReEncKey(key_id(sk_a.public), key_id(pub_b), big_x, rk)


def pre_encrypt(pk_a, data: bytes, rng: random.Random | None = None) -> bytes:
    if not data:
        raise EmptyInput("nothing to encrypt")
    rng = _default_rng(rng)
    pub = _as_public(pk_a)
    r, u = _scalar(rng), _scalar(rng)
    e, v = _exp(G, r), _exp(G, u)
    s = (u + r * _hash_scalar(b"filedes.planb.capsule", e, v)) % Q
    key = _kdf(_exp(pub, (r + u) % Q))
    nonce = rng.getrandbits(8 * NONCE_BYTES).to_bytes(NONCE_BYTES, "big")
    body = ChaCha20Poly1305(key).encrypt(nonce, data, _AAD)
    return bytes([LEVEL_FIRST]) + _enc(e) + _enc(v) + _enc(s) + nonce + body


def _parse(ct: bytes):
    if not ct:
        raise MalformedCiphertext("empty ciphertext")
    level = ct[0]
    if level == LEVEL_FIRST:
        head = 1 + 3 * ELEMENT_BYTES
    elif level == LEVEL_REENCRYPTED:
        head = 1 + 3 * ELEMENT_BYTES + ID_BYTES
    else:
        raise MalformedCiphertext(f"unknown ciphertext level {level}")
    if len(ct) < head + NONCE_BYTES + 16:
        raise MalformedCiphertext("truncated ciphertext")
    a, b, c = (int.from_bytes(ct[1 + i * ELEMENT_BYTES:1 + (i + 1) * ELEMENT_BYTES], "big") for i in range(3))
    extra = ct[1 + 3 * ELEMENT_BYTES:head]
    return level, a, b, c, extra, ct[head:head + NONCE_BYTES], ct[head + NONCE_BYTES:]


def _capsule_valid(e: int, v: int, s: int) -> bool:
    h = _hash_scalar(b"filedes.planb.capsule", e, v)
    return _exp(G, s) == v * _exp(e, h) % P


def pre_reencrypt(rk: ReEncKey, ct: bytes) -> bytes:
    level, e, v, s, _, nonce, body = _parse(ct)
    if level != LEVEL_FIRST:
        raise AlreadyReEncrypted("ciphertext has already been re-encrypted once")
    if not _capsule_valid(e, v, s):
        raise MalformedCiphertext("capsule check failed")
    e2, v2 = _exp(e, rk.rk), _exp(v, rk.rk)
    return (bytes([LEVEL_REENCRYPTED]) + _enc(e2) + _enc(v2) + _enc(rk.ephemeral)
            + rk.target_id + nonce + body)


def pre_decrypt(sk: PreKeyPair, ct: bytes) -> bytes:
    level, e, v, third, extra, nonce, body = _parse(ct)
    if level == LEVEL_FIRST:
        if not _capsule_valid(e, v, third):
            raise DecryptFailure("capsule check failed")
        point = _exp(e * v % P, sk.secret)
    else:
        if extra != sk.key_id:
            raise DecryptFailure("ciphertext was re-encrypted for a different key")
        d = _hash_scalar(b"filedes.planb.dh", third, sk.public, _exp(third, sk.secret))
        point = _exp(e * v % P, d)
    try:
        return ChaCha20Poly1305(_kdf(point)).decrypt(nonce, body, _AAD)
    except InvalidTag:
        raise DecryptFailure("authentication failed: wrong key or corrupted ciphertext") from None


def ciphertext_level(ct: bytes) -> int:
    return _parse(ct)[0]
