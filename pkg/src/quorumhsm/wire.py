"""Bit-exact command/response and envelope encodings.

Command (and response) message::

    total_len u32 BE | opcode u8 | id 16 bytes | payload | signature 64 bytes

``total_len`` counts the whole message including itself and the signature.
Envelope::

    src u16 BE | dst u16 BE | seq u64 BE | message

The signature is made by ``src`` over everything before it, envelope header
included, so the per-sender sequence number doubles as the session nonce and
a relabelled or re-addressed envelope stops verifying.

Responses set the high bit of the request opcode; their payload starts with
``status u8 | request seq u64 BE``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from typing import Optional

from .group import GroupElement, Scalar
from .multisig import SIGNATURE_LEN, schnorr_sign, schnorr_verify

HOST = 0x8000
BROADCAST = 0xFFFF
ID_LEN = 16
HEADER = struct.Struct(">HHQ")
MSG_HEAD = struct.Struct(">IB")
RESP_HEAD = struct.Struct(">BQ")
RESPONSE_BIT = 0x80


def is_host(addr: int) -> bool:
    return HOST <= addr < BROADCAST


class Op(enum.IntEnum):
    KEYGEN_INIT = 0x01
    KEYGEN_STORE_HASH = 0x02
    KEYGEN_STORE_PUBKEY = 0x03
    KEYGEN_GET_PUBKEY = 0x04
    KEYGEN_FINALIZE = 0x05
    DEC_SHARE = 0x10
    CACHE_NONCE = 0x20
    SIGN = 0x21
    RNG = 0x30
    KEYPROP_PREPARE = 0x40
    KEYPROP_SPLIT = 0x41
    KEYPROP_SHARE = 0x42
    KEYPROP_FINALIZE = 0x43


class Status(enum.IntEnum):
    OK = 0
    ACCESS_DENIED = 1
    PROTOCOL_ORDER = 2
    COMMITMENT_FAILURE = 3
    REPLAY_REJECTED = 4
    NON_OPERATIONAL = 5
    UNKNOWN_KEY = 6
    BAD_REQUEST = 7
    LIFECYCLE = 8


# flags carried in DEC_SHARE / RNG payloads
FLAG_PROOF = 0x01
FLAG_SEAL = 0x02


class WireError(ValueError):
    pass


def op_name(opcode: int) -> str:
    base = opcode & ~RESPONSE_BIT
    try:
        name = Op(base).name
    except ValueError:
        name = f"0x{base:02x}"
    return name + ("/resp" if opcode & RESPONSE_BIT else "")


@dataclass(frozen=True)
class Envelope:
    src: int
    dst: int
    seq: int
    opcode: int
    ident: bytes
    payload: bytes
    signature: bytes = bytes(SIGNATURE_LEN)

    def __post_init__(self):
        if len(self.ident) != ID_LEN:
            raise WireError(f"id must be {ID_LEN} bytes")
        if len(self.signature) != SIGNATURE_LEN:
            raise WireError(f"signature must be {SIGNATURE_LEN} bytes")

    @property
    def total_len(self) -> int:
        return MSG_HEAD.size + ID_LEN + len(self.payload) + SIGNATURE_LEN

    def signed_part(self) -> bytes:
        return (HEADER.pack(self.src, self.dst, self.seq)
                + MSG_HEAD.pack(self.total_len, self.opcode) + self.ident + self.payload)

    def message_bytes(self) -> bytes:
        """The command/response message alone, without the envelope header."""
        return self.to_bytes()[HEADER.size:]

    def to_bytes(self) -> bytes:
        return self.signed_part() + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if len(data) < HEADER.size + MSG_HEAD.size + ID_LEN + SIGNATURE_LEN:
            raise WireError("envelope too short")
        src, dst, seq = HEADER.unpack_from(data, 0)
        total, opcode = MSG_HEAD.unpack_from(data, HEADER.size)
        if total != len(data) - HEADER.size:
            raise WireError("length field does not match message size")
        off = HEADER.size + MSG_HEAD.size
        ident = bytes(data[off:off + ID_LEN])
        payload = bytes(data[off + ID_LEN:len(data) - SIGNATURE_LEN])
        sig = bytes(data[len(data) - SIGNATURE_LEN:])
        return cls(src, dst, seq, opcode, ident, payload, sig)

    def signed(self, key: Scalar) -> "Envelope":
        return replace(self, signature=schnorr_sign(key, self.signed_part()))

    def verify(self, public_key: GroupElement) -> bool:
        return schnorr_verify(public_key, self.signed_part(), self.signature)

    @property
    def is_response(self) -> bool:
        return bool(self.opcode & RESPONSE_BIT)

    @property
    def request_op(self) -> int:
        return self.opcode & ~RESPONSE_BIT

    @property
    def status(self) -> Optional[Status]:
        if not self.is_response or len(self.payload) < RESP_HEAD.size:
            return None
        return Status(self.payload[0])

    @property
    def request_seq(self) -> Optional[int]:
        if not self.is_response or len(self.payload) < RESP_HEAD.size:
            return None
        return RESP_HEAD.unpack_from(self.payload, 0)[1]

    @property
    def body(self) -> bytes:
        if self.is_response:
            return self.payload[RESP_HEAD.size:]
        return self.payload

    def describe(self) -> str:
        st = f" {self.status.name}" if self.is_response and self.status is not None else ""
        return (f"{_addr(self.src)}->{_addr(self.dst)} #{self.seq} {op_name(self.opcode)}"
                f"{st} id={self.ident.hex()[:8]} len={self.total_len}")


def _addr(a: int) -> str:
    if a == BROADCAST:
        return "*"
    if is_host(a):
        return f"host{a - HOST}"
    return f"ic{a}"


def response_payload(status: Status, request_seq: int, body: bytes = b"") -> bytes:
    return RESP_HEAD.pack(int(status), request_seq) + body


def peek_header(data: bytes):
    """``(src, dst, seq, opcode)`` without validating the rest of the envelope."""
    if len(data) < HEADER.size + MSG_HEAD.size:
        raise WireError("envelope too short")
    src, dst, seq = HEADER.unpack_from(data, 0)
    _, opcode = MSG_HEAD.unpack_from(data, HEADER.size)
    return src, dst, seq, opcode


PAYLOAD_OFFSET = HEADER.size + MSG_HEAD.size + ID_LEN
