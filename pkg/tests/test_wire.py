import struct

import pytest
from hypothesis import given, strategies as st

from quorumhsm.group import Scalar, base_mul, transparent
from quorumhsm.wire import (
    BROADCAST,
    HOST,
    Envelope,
    Op,
    Status,
    WireError,
    peek_header,
    response_payload,
)

IDENT = bytes(range(16))


def test_layout_is_bit_exact():
    env = Envelope(HOST, 3, 7, Op.DEC_SHARE, IDENT, b"\x02\xaa")
    raw = env.to_bytes()
    assert raw[:12] == struct.pack(">HHQ", HOST, 3, 7)
    total, opcode = struct.unpack_from(">IB", raw, 12)
    assert total == len(raw) - 12 == 4 + 1 + 16 + 2 + 64
    assert opcode == 0x10
    assert raw[17:33] == IDENT
    assert raw[33:35] == b"\x02\xaa"
    assert peek_header(raw) == (HOST, 3, 7, 0x10)


@given(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF), st.integers(0, 2**64 - 1),
       st.sampled_from(list(Op)), st.binary(min_size=16, max_size=16), st.binary(max_size=300))
def test_round_trip(src, dst, seq, op, ident, payload):
    env = Envelope(src, dst, seq, int(op), ident, payload)
    assert Envelope.from_bytes(env.to_bytes()) == env


def test_signature_covers_header_and_payload():
    z = transparent(257)
    sk = Scalar(z, 41)
    pk = base_mul(sk, z)
    env = Envelope(HOST, BROADCAST, 1, Op.SIGN, IDENT, b"payload").signed(sk)
    assert env.verify(pk)
    for changed in (Envelope(HOST, 2, 1, env.opcode, IDENT, b"payload", env.signature),
                    Envelope(HOST, BROADCAST, 2, env.opcode, IDENT, b"payload", env.signature),
                    Envelope(HOST, BROADCAST, 1, env.opcode, IDENT, b"payloae", env.signature),
                    Envelope(HOST + 1, BROADCAST, 1, env.opcode, IDENT, b"payload", env.signature)):
        assert not changed.verify(pk)


def test_response_fields():
    env = Envelope(2, HOST, 9, Op.SIGN | 0x80, IDENT, response_payload(Status.REPLAY_REJECTED, 41, b"x"))
    assert env.is_response and env.request_op == Op.SIGN
    assert env.status is Status.REPLAY_REJECTED
    assert env.request_seq == 41
    assert env.body == b"x"
    assert "SIGN/resp REPLAY_REJECTED" in env.describe()


def test_malformed_rejected():
    env = Envelope(1, 2, 3, Op.RNG, IDENT, b"abc").to_bytes()
    with pytest.raises(WireError):
        Envelope.from_bytes(env[:-1])
    with pytest.raises(WireError):
        Envelope.from_bytes(env[:20])
    with pytest.raises(WireError):
        Envelope(1, 2, 3, Op.RNG, b"short", b"")
