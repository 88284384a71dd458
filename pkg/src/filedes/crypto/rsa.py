"""Plan A: block-wise textbook RSA with the roles of the exponents swapped.

Replicas are "encrypted" with the private exponent and recovered with the
public one, so anyone holding the public key can read a replica while only the
key owner can mint new ones. This is unpadded, deterministic RSA: it is a
research-protocol cipher, not general-purpose encryption.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import gmpy2

from ..errors import BlockTooLarge, EmptyInput, MalformedCiphertext, WeakKey
from ..rng import SeedStream

PUBLIC_EXPONENT = 65537
ALLOWED_BITS = (1024, 2048, 3072)


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int

    @property
    def modulus_bytes(self) -> int:
        return (self.n.bit_length() + 7) // 8

    @property
    def block_bytes(self) -> int:
        return self.modulus_bytes - 1

    def to_bytes(self) -> bytes:
        return _pack_ints(b"RSAP", [self.n, self.e])

    @classmethod
    def from_bytes(cls, data: bytes) -> "RsaPublicKey":
        n, e = _unpack_ints(b"RSAP", data, 2)
        return cls(n, e)


@dataclass(frozen=True)
class RsaKeyPair:
    n: int
    e: int
    d: int
    p: int
    q: int

    @property
    def bit_length(self) -> int:
        return self.n.bit_length()

    @property
    def public(self) -> RsaPublicKey:
        return RsaPublicKey(self.n, self.e)

    def to_bytes(self) -> bytes:
        return _pack_ints(b"RSAK", [self.n, self.e, self.d, self.p, self.q])

    @classmethod
    def from_bytes(cls, data: bytes) -> "RsaKeyPair":
        return cls(*_unpack_ints(b"RSAK", data, 5))

    def _private_op(self, m: int) -> int:
        # CRT: about 3-4x faster than a full-width modexp
        dp, dq = self.d % (self.p - 1), self.d % (self.q - 1)
        qinv = pow(self.q, -1, self.p)
        m1 = int(gmpy2.powmod(m, dp, self.p))
        m2 = int(gmpy2.powmod(m, dq, self.q))
        return m2 + self.q * ((qinv * (m1 - m2)) % self.p)


def _pack_ints(magic: bytes, values) -> bytes:
    out = bytearray(magic)
    for v in values:
        raw = v.to_bytes(max(1, (v.bit_length() + 7) // 8), "big")
        out += struct.pack(">I", len(raw)) + raw
    return bytes(out)


def _unpack_ints(magic: bytes, data: bytes, count: int) -> list:
    if data[:4] != magic:
        raise MalformedCiphertext(f"expected key record {magic!r}")
    pos, values = 4, []
    for _ in range(count):
        if len(data) < pos + 4:
            raise MalformedCiphertext("truncated key record")
        (size,) = struct.unpack(">I", data[pos:pos + 4])
        pos += 4
        if len(data) < pos + size:
            raise MalformedCiphertext("truncated key record")
        values.append(int.from_bytes(data[pos:pos + size], "big"))
        pos += size
    if pos != len(data):
        raise MalformedCiphertext("trailing bytes in key record")
    return values


def _random_prime(rng: SeedStream, bits: int) -> int:
    # top two bits set so that p*q has exactly 2*bits bits
    start = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
    return int(gmpy2.next_prime(start))


def rsa_keygen(bit_length: int = 2048, seed: bytes | None = None) -> RsaKeyPair:
    """Generate a key pair; deterministic when ``seed`` is given."""
    if bit_length < 1024:
        raise WeakKey(f"{bit_length}-bit RSA is below the 1024-bit floor")
    if bit_length not in ALLOWED_BITS:
        raise ValueError(f"bit_length must be one of {ALLOWED_BITS}")
    if seed is None:
        import secrets
        seed = secrets.token_bytes(32)
    rng = SeedStream(seed, f"rsa{bit_length}")
    half = bit_length // 2
    while True:
        p = _random_prime(rng, half)
        q = _random_prime(rng, half)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bit_length:
            continue
        lam = math.lcm(p - 1, q - 1)
        if math.gcd(PUBLIC_EXPONENT, lam) != 1:
            continue
        d = pow(PUBLIC_EXPONENT, -1, lam)
        return RsaKeyPair(n, PUBLIC_EXPONENT, d, max(p, q), min(p, q))


def plan_a_encrypt(sk: RsaKeyPair, data: bytes) -> bytes:
    if not data:
        raise EmptyInput("nothing to encrypt")
    k = sk.public.modulus_bytes
    step = k - 1
    out = bytearray()
    for i in range(0, len(data), step):
        block = data[i:i + step].ljust(step, b"\x00")
        m = int.from_bytes(block, "big")
        if m >= sk.n:
            raise BlockTooLarge("plaintext block not below modulus")
        out += sk._private_op(m).to_bytes(k, "big")
    return bytes(out)


def plan_a_decrypt(pk: RsaPublicKey, ct: bytes, length: int | None = None) -> bytes:
    """Invert :func:`plan_a_encrypt`; ``length`` trims the final block's zero padding."""
    k = pk.modulus_bytes
    if not ct or len(ct) % k:
        raise MalformedCiphertext(f"ciphertext length {len(ct)} is not a multiple of {k}")
    bound = 1 << (8 * (k - 1))
    out = bytearray()
    for i in range(0, len(ct), k):
        c = int.from_bytes(ct[i:i + k], "big")
        if c >= pk.n:
            raise BlockTooLarge("ciphertext block not below modulus")
        m = int(gmpy2.powmod(c, pk.e, pk.n))
        if m >= bound:
            # only happens under the wrong key
            raise MalformedCiphertext("decrypted block overflows the block size")
        out += m.to_bytes(k - 1, "big")
    if length is not None:
        if length > len(out):
            raise MalformedCiphertext("declared length exceeds decrypted data")
        del out[length:]
    return bytes(out)
