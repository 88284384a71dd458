"""Splittable seeded randomness.

All simulator randomness flows from one master seed. Each actor gets its own
stream derived by hashing the parent seed with a label, so adding draws to one
actor never perturbs another.
"""

from __future__ import annotations

import hashlib
import random


class SeedStream(random.Random):
    """A ``random.Random`` that can spawn independent named children."""

    def __new__(cls, *args, **kwargs):
        # random.Random.__new__ rejects extra positional args on 3.10
        return super().__new__(cls)

    def __init__(self, seed: int | bytes | str, label: str = "root"):
        if isinstance(seed, int):
            seed = seed.to_bytes(8, "big", signed=False) if seed >= 0 else str(seed).encode()
        elif isinstance(seed, str):
            seed = seed.encode()
        self._material = hashlib.sha256(b"filedes.rng|" + seed + b"|" + label.encode()).digest()
        self.label = label
        super().__init__(int.from_bytes(self._material, "big"))

    def child(self, label: str) -> "SeedStream":
        return SeedStream(self._material, f"{self.label}/{label}")

    def bytes32(self) -> bytes:
        return self.randbytes(32)

    def uniform64(self) -> float:
        """Uniform draw in [0, 1) from 64 random bits."""
        return self.getrandbits(64) / 2.0**64
