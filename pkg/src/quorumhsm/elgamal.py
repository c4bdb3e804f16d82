"""ElGamal over the quorum key, distributed decryption shares and share proofs.

A decryption share is ``A_i = -x_i * C1``; adding every share to ``C2``
cancels the mask ``r * Y_agg``.  A share can carry a Chaum-Pedersen proof
that ``log_G(Y_i) == log_C1(-A_i)``, made non-interactive with Fiat-Shamir.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from . import _p256
from .errors import IncompleteQuorum, ProtocolError, QuorumError
from .group import (
    SCALAR_LEN,
    TAG_DLEQ,
    TAG_SEAL,
    Backend,
    DomainParams,
    GroupElement,
    Scalar,
    base_mul,
    digest,
    hash_to_scalar,
    scalar_rand,
)


@dataclass(frozen=True)
class Ciphertext:
    C1: GroupElement
    C2: GroupElement

    def to_bytes(self) -> bytes:
        return self.C1.encode() + self.C2.encode()

    @classmethod
    def from_bytes(cls, params: DomainParams, data: bytes) -> "Ciphertext":
        w = params.element_len
        if len(data) != 2 * w:
            raise ValueError("ciphertext has the wrong length")
        return cls(params.decode_element(data[:w]), params.decode_element(data[w:]))


@dataclass(frozen=True)
class DleqProof:
    T1: GroupElement
    T2: GroupElement
    challenge: Scalar
    response: Scalar

    def to_bytes(self) -> bytes:
        return self.T1.encode() + self.T2.encode() + self.challenge.to_bytes() + self.response.to_bytes()

    @classmethod
    def from_bytes(cls, params: DomainParams, data: bytes) -> "DleqProof":
        w = params.element_len
        if len(data) != 2 * w + 2 * SCALAR_LEN:
            raise ValueError("DLEQ proof has the wrong length")
        T1 = params.decode_element(data[:w])
        T2 = params.decode_element(data[w:2 * w])
        c = params.decode_scalar(data[2 * w:2 * w + SCALAR_LEN])
        z = params.decode_scalar(data[2 * w + SCALAR_LEN:])
        return cls(T1, T2, c, z)

    @staticmethod
    def encoded_len(params: DomainParams) -> int:
        return 2 * params.element_len + 2 * SCALAR_LEN


@dataclass(frozen=True)
class DecryptionShare:
    node_id: int
    A: GroupElement
    proof: Optional[DleqProof] = None


def encrypt(params: DomainParams, m: GroupElement, Y_agg: GroupElement,
            rng: random.Random, r: Optional[Scalar] = None) -> Ciphertext:
    if r is None:
        r = scalar_rand(params, rng)
    return Ciphertext(base_mul(r, params), m + r * Y_agg)


def dec_share(C1: GroupElement, x_i: Scalar) -> GroupElement:
    return (-x_i) * C1


def aggr_dec(C2: GroupElement, shares: Sequence[GroupElement],
             quorum_size: Optional[int] = None) -> GroupElement:
    if not shares or (quorum_size is not None and len(shares) < quorum_size):
        have = len(shares)
        raise IncompleteQuorum(f"got {have} decryption shares, need {quorum_size or 'at least 1'}")
    D = shares[0]
    for A in shares[1:]:
        D = D + A
    return C2 + D


def _dleq_challenge(params: DomainParams, Y: GroupElement, C1: GroupElement,
                    B: GroupElement, T1: GroupElement, T2: GroupElement) -> Scalar:
    data = b"".join(e.encode() for e in (params.generator, Y, C1, B, T1, T2))
    return hash_to_scalar(data, params, TAG_DLEQ)


def dleq_prove(x_i: Scalar, C1: GroupElement, Y_i: GroupElement, A_i: GroupElement,
               rng: random.Random) -> DleqProof:
    params = x_i.params
    B = -A_i
    while True:
        w = scalar_rand(params, rng)
        T1 = base_mul(w, params)
        T2 = w * C1
        c = _dleq_challenge(params, Y_i, C1, B, T1, T2)
        # a zero challenge would not bind the share
        if c.value:
            return DleqProof(T1, T2, c, w - c * x_i)


def dleq_verify(proof: DleqProof, G: GroupElement, Y_i: GroupElement,
                C1: GroupElement, A_i: GroupElement) -> bool:
    params = G.params
    try:
        c, z = proof.challenge, proof.response
        if c.value == 0:
            return False
        B = -A_i
        if z * G + c * Y_i != proof.T1:
            return False
        if z * C1 + c * B != proof.T2:
            return False
        return _dleq_challenge(params, Y_i, C1, B, proof.T1, proof.T2) == c
    except (ValueError, TypeError, AttributeError, QuorumError):
        return False


MAX_MESSAGE_LEN = 30


def encode_message(params: DomainParams, data: bytes) -> GroupElement:
    """Map a short byte string to a group element, invertibly.

    Curve: try-and-increment on an x coordinate laid out as
    ``len || data || zero pad || counter``.  Transparent: the residue of
    ``len || data``, which must be below ``n``.
    """
    if params.backend is Backend.TRANSPARENT:
        v = int.from_bytes(bytes([len(data)]) + data, "big")
        if v >= params.n:
            raise ValueError("message too long for this transparent group")
        return params.element(v)
    if len(data) > MAX_MESSAGE_LEN:
        raise ValueError(f"messages are limited to {MAX_MESSAGE_LEN} bytes")
    body = bytes([len(data)]) + data.ljust(MAX_MESSAGE_LEN, b"\x00")
    for ctr in range(256):
        x = int.from_bytes(body + bytes([ctr]), "big")
        y = _p256.lift_x(x)
        if y is not None:
            return GroupElement(params, (_p256.mpz(x), y))
    raise ValueError("no curve point found for message")


def decode_message(m: GroupElement) -> bytes:
    params = m.params
    if params.backend is Backend.TRANSPARENT:
        raw = int(m.rep).to_bytes(4, "big").lstrip(b"\x00")
        if not raw:
            return b""
        if len(raw) != 1 + raw[0]:
            raise ValueError("element does not encode a message")
        return raw[1:]
    if m.rep is None:
        raise ValueError("identity does not encode a message")
    raw = int(m.rep[0]).to_bytes(32, "big")
    n = raw[0]
    if n > MAX_MESSAGE_LEN:
        raise ValueError("element does not encode a message")
    return raw[1:1 + n]


def _keystream(shared: GroupElement, K: GroupElement, length: int) -> bytes:
    out = b""
    i = 0
    while len(out) < length:
        out += digest(TAG_SEAL, shared.encode(), K.encode(), i.to_bytes(4, "big"))
        i += 1
    return out[:length]


def seal(params: DomainParams, pk: GroupElement, data: bytes, rng: random.Random) -> bytes:
    """Hashed ElGamal to ``pk``: ``encode(k*G) || data XOR H(k*pk)``.

    Provides confidentiality only; integrity comes from the enclosing signed
    envelope.
    """
    k = scalar_rand(params, rng)
    while k.value == 0:
        k = scalar_rand(params, rng)
    K = base_mul(k, params)
    stream = _keystream(k * pk, K, len(data))
    return K.encode() + bytes(a ^ b for a, b in zip(data, stream))


def open_sealed(params: DomainParams, sk: Scalar, blob: bytes) -> bytes:
    w = params.element_len
    if len(blob) < w:
        raise ProtocolError("sealed payload too short")
    K = params.decode_element(blob[:w])
    body = blob[w:]
    stream = _keystream(sk * K, K, len(body))
    return bytes(a ^ b for a, b in zip(body, stream))
