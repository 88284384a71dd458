"""Replica encryption: Plan A (public-decryptable RSA) and Plan B (proxy re-encryption)."""

from .pre import PreKeyPair, ReEncKey, pre_decrypt, pre_encrypt, pre_keygen, pre_reencrypt, pre_rekeygen
from .replica import EncryptedReplica, Plan, compute_cid, make_replica, open_replica
from .rsa import RsaKeyPair, RsaPublicKey, plan_a_decrypt, plan_a_encrypt, rsa_keygen

__all__ = [
    "EncryptedReplica",
    "Plan",
    "PreKeyPair",
    "ReEncKey",
    "RsaKeyPair",
    "RsaPublicKey",
    "compute_cid",
    "make_replica",
    "open_replica",
    "plan_a_decrypt",
    "plan_a_encrypt",
    "pre_decrypt",
    "pre_encrypt",
    "pre_keygen",
    "pre_reencrypt",
    "pre_rekeygen",
    "rsa_keygen",
]
