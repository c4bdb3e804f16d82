"""Commit-then-reveal key generation pieces, additive sharing and the RNG combiner.

These are the pure building blocks; sequencing (who may see what, and when)
lives in :mod:`quorumhsm.node` and :mod:`quorumhsm.host`.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

from .errors import ProtocolError
from .group import (
    TAG_COMMIT,
    DomainParams,
    GroupElement,
    Scalar,
    base_mul,
    digest,
    scalar_rand,
)

RNG_SHARE_LEN = 32


@dataclass(frozen=True)
class KeyTriplet:
    x: Scalar
    Y: GroupElement
    h: bytes

    def __repr__(self):
        # keep the secret share out of logs and tracebacks
        return f"KeyTriplet(Y={self.Y!r}, h={self.h.hex()[:16]}...)"


@dataclass
class QuorumKey:
    """Public outcome of one key generation: aggregate key plus every public share."""

    key_id: bytes
    Y_agg: GroupElement
    shares: Dict[int, GroupElement]
    quorum_id: str = ""
    threshold: int = 0
    size: int = 0

    def __post_init__(self):
        if not self.size:
            self.size = len(self.shares)
        if not self.threshold:
            self.threshold = self.size


def commitment(Y: GroupElement) -> bytes:
    return digest(TAG_COMMIT, Y.encode())


def triplet_gen(params: DomainParams, rng: random.Random, x: Optional[Scalar] = None) -> KeyTriplet:
    """Fresh share ``x``, its public value ``x*G`` and the commitment to it.

    ``x`` can be forced for hand-checked examples.
    """
    if x is None:
        x = scalar_rand(params, rng)
    Y = base_mul(x, params)
    return KeyTriplet(x, Y, commitment(Y))


def commit_verify(Y: Sequence[GroupElement], H: Sequence[bytes]) -> bool:
    if len(Y) != len(H):
        raise ProtocolError(f"{len(Y)} public shares but {len(H)} commitments")
    return all(commitment(y) == h for y, h in zip(Y, H))


Share = Union[Scalar, GroupElement]


def share_aggr(shares: Sequence[Share]) -> Share:
    if not shares:
        raise ProtocolError("cannot aggregate an empty set of shares")
    kind = type(shares[0])
    if kind not in (Scalar, GroupElement) or any(type(s) is not kind for s in shares):
        raise ProtocolError("shares must all be scalars or all group elements")
    acc = shares[0]
    for s in shares[1:]:
        acc = acc + s
    return acc


@dataclass
class ShareVector:
    v: List[Scalar] = field(default_factory=list)

    def __len__(self):
        return len(self.v)

    def __iter__(self):
        return iter(self.v)

    def __getitem__(self, i):
        return self.v[i]


def secret_share(s: Scalar, k: int, rng: Optional[random.Random] = None,
                 randoms: Optional[Sequence[int]] = None) -> ShareVector:
    """Split ``s`` into ``k`` additive shares mod ``n``.

    The first ``k - 1`` shares are uniform (or taken from ``randoms``); the last
    one closes the sum.
    """
    if k < 2:
        raise ProtocolError(f"secret sharing needs at least 2 shares, got {k}")
    params = s.params
    if randoms is not None:
        if len(randoms) != k - 1:
            raise ProtocolError("need exactly k-1 forced randoms")
        head = [Scalar(params, r) for r in randoms]
    else:
        if rng is None:
            raise ProtocolError("secret_share needs a random source")
        head = [scalar_rand(params, rng) for _ in range(k - 1)]
    last = s
    for r in head:
        last = last - r
    return ShareVector(head + [last])


def one_way(data: bytes, out_len: int) -> bytes:
    """SHA3-512 of ``data``; longer outputs append SHA3-512(data || counter) blocks."""
    if out_len < 0:
        raise ValueError("negative output length")
    out = hashlib.sha3_512(data).digest()
    i = 1
    while len(out) < out_len:
        out += hashlib.sha3_512(data + i.to_bytes(4, "big")).digest()
        i += 1
    return out[:out_len]


def xor_bytes(shares: Sequence[bytes]) -> bytes:
    acc = bytearray(len(shares[0]))
    for s in shares:
        for i, b in enumerate(s):
            acc[i] ^= b
    return bytes(acc)


def drng_combine(shares: Sequence[bytes], out_len: int = 64) -> bytes:
    if not shares:
        raise ProtocolError("no randomness shares to combine")
    width = len(shares[0])
    if any(len(s) != width for s in shares):
        raise ProtocolError("randomness shares differ in length")
    return one_way(xor_bytes(shares), out_len)
