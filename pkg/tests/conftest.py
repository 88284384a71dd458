import random

import pytest

from filedes.crypto import pre_keygen, rsa_keygen
from filedes.crypto.replica import EncryptedReplica, Plan
from filedes.merkle import CHUNK_SIZE

# (criterion number, verdict line) pairs, echoed in the terminal summary even when output is captured
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rsa_keys():
    return [rsa_keygen(1024, seed=bytes([i]) * 32) for i in range(4)]


@pytest.fixture(scope="session")
def pre_keys():
    return [pre_keygen(bytes([0x40 + i]) * 32) for i in range(4)]


def raw_replica(rng: random.Random, size: int) -> EncryptedReplica:
    """Replica wrapper around random bytes; proofs only care about the stored bytes."""
    data = rng.randbytes(size)
    leaves = 1
    while leaves * CHUNK_SIZE < size:
        leaves *= 2
    return EncryptedReplica(Plan.A, leaves, size, data)
