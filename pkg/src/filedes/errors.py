"""Exception hierarchy.

Every protocol failure derives from FileDESError so the service and CLI can
report a stable machine-readable name (the class name) for it.
"""


class FileDESError(Exception):
    """Base class for all protocol errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# merkle
class EmptyInput(FileDESError, ValueError):
    pass


class IndexOutOfRange(FileDESError, IndexError):
    pass


# crypto
class WeakKey(FileDESError, ValueError):
    pass


class BlockTooLarge(FileDESError, ValueError):
    pass


class MalformedCiphertext(FileDESError, ValueError):
    pass


class AlreadyReEncrypted(FileDESError):
    pass


class DecryptFailure(FileDESError):
    pass


class MalformedReplica(FileDESError, ValueError):
    pass


# versioning
class GapInChain(FileDESError):
    pass


class PatchMismatch(FileDESError):
    pass


# poes
class NotStored(FileDESError, KeyError):
    pass


class RootMismatch(FileDESError):
    pass


class ZeroRounds(FileDESError, ValueError):
    pass


class MalformedProof(FileDESError, ValueError):
    pass


class ProofRejected(FileDESError):
    """A well-formed proof that does not verify."""


# selection
class BadWeight(FileDESError, ValueError):
    pass


class NoEligibleMiner(FileDESError):
    pass


# rollup
class UnknownCid(FileDESError, KeyError):
    pass


class EmptyBatch(FileDESError, ValueError):
    pass


class OversizedBatch(FileDESError, ValueError):
    pass


class RetrieveFailed(FileDESError):
    pass


# ledger
class DuplicateDeal(FileDESError):
    pass


class UnknownMiner(FileDESError, KeyError):
    pass


# simulator
class ConfigInvalid(FileDESError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DuplicateAggregate(FileDESError):
    pass
