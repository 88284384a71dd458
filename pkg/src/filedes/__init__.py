"""Encrypted, versioned storage with proofs of storage, PoSt and rollup batch verification."""

from .errors import FileDESError
from .ledger import DealRecord, Ledger
from .merkle import MerklePath, MerkleTree, build_tree, prove_path, verify_path
from .poes import PoSProof, PoStProof, ReplicaStore, cycle_prove, prove, setup, verify
from .rollup import AggregateProof, RollupMiner, aggregate, retrieve, verify_aggregate
from .selection import MinerProfile, compute_weights, rand_select
from .versioning import Increment, VersionChain, apply_increments, compute_increment, should_rebase

__version__ = "0.1.0"

__all__ = [
    "AggregateProof", "DealRecord", "FileDESError", "Increment", "Ledger", "MerklePath", "MerkleTree",
    "MinerProfile", "PoSProof", "PoStProof", "ReplicaStore", "RollupMiner", "VersionChain", "aggregate",
    "apply_increments", "build_tree", "compute_increment", "compute_weights", "cycle_prove", "prove",
    "prove_path", "rand_select", "retrieve", "setup", "should_rebase", "verify", "verify_aggregate",
    "verify_path",
]
