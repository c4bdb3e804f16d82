"""Two-phase Schnorr multi-signature over a key produced by distributed keygen.

Caching: node ``i`` publishes ``R_ij = PRF_s(j) * G``; the host sums them into
``R_j``.  Signing: every node returns ``sigma_ij = PRF_s(j) - x_i * eps_j`` with
``eps_j = H(R_j || H(m) || j)`` and the host sums the ``sigma_ij``.  A
signature ``(sigma, eps)`` for index ``j`` verifies when
``eps == H(sigma*G + eps*Y || H(m) || j)``.

The same verification equation (with ``j = 0`` and its own domain tag) is used
for the single-key signatures that authenticate every envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Set, Tuple

from .errors import IncompleteQuorum, InconsistentShare, ProtocolError, QuorumError, ReplayRejected
from .group import (
    SCALAR_LEN,
    TAG_CHALLENGE,
    TAG_ENVELOPE,
    TAG_MESSAGE,
    TAG_NONCE,
    DomainParams,
    GroupElement,
    Scalar,
    base_mul,
    digest,
    encode_index,
    hash_to_scalar,
    prf,
)

SIGNATURE_LEN = 2 * SCALAR_LEN


def message_digest(m: bytes) -> bytes:
    return digest(TAG_MESSAGE, m)


def challenge(R: GroupElement, Hm: bytes, j: int, tag: bytes = TAG_CHALLENGE) -> Scalar:
    return hash_to_scalar(R.encode() + Hm + encode_index(j), R.params, tag)


@dataclass
class NonceCacheEntry:
    j: int
    R: GroupElement
    per_node: Dict[int, GroupElement] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        # what the host actually has to keep: the aggregate and its index
        return self.R.encode() + encode_index(self.j)


@dataclass(frozen=True)
class SignatureShare:
    node_id: int
    j: int
    sigma: Scalar
    eps: Scalar


@dataclass(frozen=True)
class AggregateSignature:
    sigma: Scalar
    eps: Scalar
    j: int

    def to_bytes(self) -> bytes:
        return self.sigma.to_bytes() + self.eps.to_bytes() + encode_index(self.j)

    @classmethod
    def from_bytes(cls, params: DomainParams, data: bytes) -> "AggregateSignature":
        if len(data) != 2 * SCALAR_LEN + 8:
            raise ValueError("signature must be 72 bytes")
        sigma = params.decode_scalar(data[:SCALAR_LEN])
        eps = params.decode_scalar(data[SCALAR_LEN:2 * SCALAR_LEN])
        return cls(sigma, eps, int.from_bytes(data[2 * SCALAR_LEN:], "big"))


class JLedger:
    """Record of consumed signing indices for one key on one node.

    Keeps a high-water mark plus a bounded window of skipped indices below it;
    anything at or below the mark and outside the window is refused.
    """

    def __init__(self, window: int = 64):
        self.window_size = window
        self.mark = 0
        self.window: Set[int] = set()

    def is_fresh(self, j: int) -> bool:
        return j > self.mark or j in self.window

    def consume(self, j: int) -> None:
        if j < 1:
            raise ProtocolError("signing indices start at 1")
        if not self.is_fresh(j):
            raise ReplayRejected(f"index j={j} already used or expired")
        if j > self.mark:
            low = max(self.mark + 1, j - self.window_size)
            self.window.update(range(low, j))
            self.mark = j
            floor = j - self.window_size
            self.window = {w for w in self.window if w >= floor}
        else:
            self.window.discard(j)


def nonce_scalar(s: bytes, j: int, params: DomainParams) -> Scalar:
    return prf(s, j, params)


def nonce_point(s: bytes, j: int, params: DomainParams) -> GroupElement:
    return base_mul(prf(s, j, params), params)


def share_response(r: Scalar, x_i: Scalar, eps: Scalar) -> Scalar:
    return r - x_i * eps


def sign_share(x_i: Scalar, s: bytes, Hm: bytes, j: int, R_j: GroupElement) -> Tuple[Scalar, Scalar]:
    """Pure share computation; the caller owns the replay ledger."""
    eps = challenge(R_j, Hm, j)
    return share_response(prf(s, j, x_i.params), x_i, eps), eps


def aggregate(shares: Sequence[SignatureShare], quorum: Optional[Sequence[int]] = None) -> AggregateSignature:
    if not shares:
        raise IncompleteQuorum("no signature shares")
    if quorum is not None:
        missing = set(quorum) - {s.node_id for s in shares}
        if missing:
            raise IncompleteQuorum(f"missing signature shares from nodes {sorted(missing)}")
    first = shares[0]
    for s in shares[1:]:
        if s.j != first.j or s.eps != first.eps:
            raise InconsistentShare(f"node {s.node_id} disagrees on (j, eps)")
    sigma = first.sigma
    for s in shares[1:]:
        sigma = sigma + s.sigma
    return AggregateSignature(sigma, first.eps, first.j)


def _recompute(Y: GroupElement, Hm: bytes, j: int, sigma: Scalar, eps: Scalar, tag: bytes) -> Scalar:
    params = Y.params
    R = base_mul(sigma, params) + eps * Y
    return challenge(R, Hm, j, tag)


def verify(Y: GroupElement, m: bytes, j: int, sig: AggregateSignature) -> bool:
    try:
        if sig.j != j:
            return False
        return _recompute(Y, message_digest(m), j, sig.sigma, sig.eps, TAG_CHALLENGE) == sig.eps
    except (ValueError, TypeError, QuorumError):
        return False


def schnorr_sign(x: Scalar, msg: bytes) -> bytes:
    """Single-key signature ``sigma || eps`` with a deterministic nonce."""
    params = x.params
    Hm = message_digest(msg)
    r = hash_to_scalar(x.to_bytes() + Hm, params, TAG_NONCE)
    if r.value == 0:
        r = Scalar(params, 1)
    R = base_mul(r, params)
    eps = challenge(R, Hm, 0, TAG_ENVELOPE)
    sigma = r - x * eps
    return sigma.to_bytes() + eps.to_bytes()


def schnorr_verify(Y: GroupElement, msg: bytes, sig: bytes) -> bool:
    params = Y.params
    if len(sig) != SIGNATURE_LEN:
        return False
    try:
        sigma = params.decode_scalar(sig[:SCALAR_LEN])
        eps = params.decode_scalar(sig[SCALAR_LEN:])
    except ValueError:
        return False
    return _recompute(Y, message_digest(msg), 0, sigma, eps, TAG_ENVELOPE) == eps
