import random

import pytest
from hypothesis import given, settings, strategies as st

from quorumhsm.elgamal import (
    Ciphertext,
    DleqProof,
    aggr_dec,
    decode_message,
    dec_share,
    dleq_prove,
    dleq_verify,
    encode_message,
    encrypt,
    open_sealed,
    seal,
)
from quorumhsm.errors import IncompleteQuorum
from quorumhsm.group import Scalar, base_mul, p256, scalar_rand, transparent


def test_encrypt_forced_r(z13):
    ct = encrypt(z13, z13.element(4), z13.element(2), random.Random(0), r=Scalar(z13, 5))
    assert (ct.C1, ct.C2) == (z13.element(5), z13.element(1))


def test_encrypt_under_identity_key(z13):
    ct = encrypt(z13, z13.element(4), z13.identity, random.Random(0), r=Scalar(z13, 6))
    assert ct.C2 == z13.element(4)


def test_dec_share_examples(z13):
    assert dec_share(z13.element(5), Scalar(z13, 3)) == z13.element(11)
    assert dec_share(z13.element(5), Scalar(z13, 5)) == z13.element(1)
    assert dec_share(z13.element(5), Scalar(z13, 0)).is_identity


def test_full_trace(z13):
    xs = [Scalar(z13, v) for v in (3, 5, 7)]
    Y = base_mul(sum(x.value for x in xs), z13)
    ct = encrypt(z13, z13.element(4), Y, random.Random(0), r=Scalar(z13, 5))
    shares = [dec_share(ct.C1, x) for x in xs]
    assert shares == [z13.element(v) for v in (11, 1, 4)]
    assert aggr_dec(ct.C2, shares, 3) == z13.element(4)


def test_aggr_dec_edge_cases(z13):
    assert aggr_dec(z13.element(9), [z13.identity] * 3) == z13.element(9)
    assert aggr_dec(z13.element(1), [z13.element(11), z13.element(2), z13.element(4)]) != z13.element(4)
    with pytest.raises(IncompleteQuorum):
        aggr_dec(z13.element(1), [z13.element(11)], quorum_size=3)


def test_ciphertext_bytes_round_trip(params):
    rng = random.Random(2)
    ct = encrypt(params, base_mul(9, params), base_mul(4, params), rng)
    assert Ciphertext.from_bytes(params, ct.to_bytes()) == ct


@settings(max_examples=25)
@given(st.integers(1, 10), st.integers(0, 2**32), st.sampled_from(["transparent", "curve"]))
def test_round_trip_property(t, seed, backend):
    params = transparent(257) if backend == "transparent" else p256()
    rng = random.Random(seed)
    xs = [scalar_rand(params, rng) for _ in range(t)]
    Y = base_mul(sum(x.value for x in xs), params)
    m = base_mul(rng.randrange(params.n), params)
    ct = encrypt(params, m, Y, rng)
    assert aggr_dec(ct.C2, [dec_share(ct.C1, x) for x in xs], t) == m


def _statement(params, x, C1):
    x = Scalar(params, x)
    return x, base_mul(x, params), (-x) * C1


def test_dleq_completeness_and_field_tamper(params):
    rng = random.Random(4)
    C1 = base_mul(31, params)
    x, Y, A = _statement(params, 19, C1)
    proof = dleq_prove(x, C1, Y, A, rng)
    G = params.generator
    assert dleq_verify(proof, G, Y, C1, A)
    assert not dleq_verify(proof, G, Y, C1, A + G)
    zeroed = DleqProof(params.identity, params.identity, Scalar(params, 0), Scalar(params, 0))
    assert not dleq_verify(zeroed, G, Y, C1, A)
    assert DleqProof.from_bytes(params, proof.to_bytes()) == proof
    assert len(proof.to_bytes()) == DleqProof.encoded_len(params)


def test_dleq_exhaustive_n13():
    z = transparent(13)
    G = z.generator
    rng = random.Random(0)
    false_accepts = 0
    for xv in range(13):
        for c1 in range(1, 13):
            C1 = z.element(c1)
            x, Y, A = _statement(z, xv, C1)
            proof = dleq_prove(x, C1, Y, A, rng)
            assert dleq_verify(proof, G, Y, C1, A)
            for d in range(1, 13):
                D = z.element(d)
                false_accepts += dleq_verify(proof, G, Y, C1, A + D)
                for field in range(4):
                    f = [proof.T1, proof.T2, proof.challenge, proof.response]
                    f[field] = f[field] + (D if field < 2 else Scalar(z, d))
                    false_accepts += dleq_verify(DleqProof(*f), G, Y, C1, A)
    assert false_accepts == 0


@pytest.mark.parametrize("text", [b"", b"a", b"hello quorum", b"x" * 30])
def test_message_embedding_curve(curve, text):
    m = encode_message(curve, text)
    assert decode_message(m) == text


def test_message_embedding_transparent():
    z = transparent(65537)
    assert decode_message(encode_message(z, b"A")) == b"A"
    with pytest.raises(ValueError):
        encode_message(transparent(13), b"long")
    with pytest.raises(ValueError):
        encode_message(p256(), b"y" * 31)


def test_seal_round_trip(params):
    rng = random.Random(8)
    sk = Scalar(params, 1234567)
    pk = base_mul(sk, params)
    blob = seal(params, pk, b"secret share bytes", rng)
    assert b"secret share bytes" not in blob
    assert open_sealed(params, sk, blob) == b"secret share bytes"
    assert open_sealed(params, Scalar(params, 7654321), blob) != b"secret share bytes"


def test_decode_rejects_non_message_residue():
    z = transparent(257)
    with pytest.raises(ValueError):
        decode_message(base_mul(42, z))  # length byte 42 with no body
