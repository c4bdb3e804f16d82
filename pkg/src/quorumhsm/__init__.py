"""Emulated cryptographic module built from a quorum of mutually untrusted ICs.

Secrets are additively shared across the ICs of a quorum.  Keys are generated
with a commit-then-reveal exchange, ciphertexts are decrypted from per-node
shares (optionally with DLEQ proofs), signatures are aggregated Schnorr
multisignatures with an index replay guard, and keys can be re-shared onto a
second quorum.  Everything runs over a deterministic, adversarial fabric.
"""

from .board import Board
from .elgamal import Ciphertext, encrypt
from .errors import QuorumError
from .fabric import AdversarySpec, Fabric, Rule, Transcript
from .group import DomainParams, p256, transparent
from .host import Host, HostIdentity, QuorumConfig
from .multisig import AggregateSignature, verify
from .node import ICNode
from .reliability import k_tolerance, tolerance
from .scenario import run_scenario

__version__ = "0.1.0"

__all__ = [
    "AdversarySpec", "AggregateSignature", "Board", "Ciphertext", "DomainParams", "Fabric",
    "Host", "HostIdentity", "ICNode", "QuorumConfig", "QuorumError", "Rule", "Transcript",
    "encrypt", "k_tolerance", "p256", "run_scenario", "tolerance", "transparent", "verify",
]
