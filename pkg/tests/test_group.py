import random

import pytest
from hypothesis import given, settings, strategies as st

from quorumhsm import _p256
from quorumhsm.errors import InvalidKey, ParameterMismatch
from quorumhsm.group import (
    Scalar,
    add,
    base_mul,
    hash_to_scalar,
    mul,
    neg,
    p256,
    prf,
    scalar_rand,
    transparent,
)

# SEC 2 constants, typed in independently of the implementation
SEC2_P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
SEC2_N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
SEC2_GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
SEC2_GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5


def naive_mul(k, point):
    """Affine double-and-add, the slow reference."""
    p = SEC2_P

    def add_(a, b):
        if a is None:
            return b
        if b is None:
            return a
        if a[0] == b[0] and (a[1] + b[1]) % p == 0:
            return None
        if a == b:
            lam = 3 * a[0] * a[0] * pow(2 * a[1], -1, p) - 3 * pow(2 * a[1], -1, p)
        else:
            lam = (b[1] - a[1]) * pow(b[0] - a[0], -1, p)
        lam %= p
        x = (lam * lam - a[0] - b[0]) % p
        return x, (lam * (a[0] - x) - a[1]) % p

    acc = None
    while k:
        if k & 1:
            acc = add_(acc, point)
        point = add_(point, point)
        k >>= 1
    return acc


def test_curve_constants_match_sec2():
    assert _p256.P == SEC2_P
    assert _p256.N == SEC2_N
    assert (_p256.GX, _p256.GY) == (SEC2_GX, SEC2_GY)


@pytest.mark.parametrize("k", [1, 2, 3, 7, 2**128 + 5, SEC2_N - 1, 0xDEADBEEF * 2**200])
def test_base_mul_matches_reference(k):
    got = base_mul(k, p256())
    want = naive_mul(k, (SEC2_GX, SEC2_GY))
    assert got.encode()[1:] == want[0].to_bytes(32, "big")
    assert got.encode()[0] == 2 + (want[1] & 1)


def test_variable_base_matches_reference():
    P = base_mul(12345, p256())
    for k in (3, 2**255 + 17, SEC2_N - 2):
        got = mul(k, P)
        want = naive_mul(k * 12345 % SEC2_N, (SEC2_GX, SEC2_GY))
        assert got.encode()[1:] == want[0].to_bytes(32, "big")


def test_order_times_generator_is_identity(curve):
    assert base_mul(curve.n, curve).is_identity
    assert mul(curve.n - 1, curve.generator) == -curve.generator


def test_encode_decode_round_trip(curve):
    rng = random.Random(5)
    for _ in range(20):
        P = base_mul(scalar_rand(curve, rng), curve)
        assert len(P.encode()) == 33
        assert curve.decode_element(P.encode()) == P
    assert curve.identity.encode() == bytes(33)
    assert curve.decode_element(bytes(33)).is_identity


def test_decode_rejects_off_curve_point(curve):
    bad = None
    for x in range(2, 50):
        if _p256.lift_x(x) is None:
            bad = bytes([2]) + x.to_bytes(32, "big")
            break
    assert bad is not None
    with pytest.raises(ValueError):
        curve.decode_element(bad)


def test_transparent_encoding(z13):
    assert z13.element(5).encode() == bytes([0, 0, 0, 5])
    assert z13.decode_element(bytes([0, 0, 0, 12])) == z13.element(12)
    with pytest.raises(ValueError):
        z13.decode_element(bytes([0, 0, 0, 13]))
    assert Scalar(z13, 4).to_bytes() == bytes(31) + b"\x04"


def test_transparent_params_must_be_prime():
    with pytest.raises(ValueError):
        transparent(12)


def test_scalar_rand_range_and_determinism(z13, curve):
    v = scalar_rand(z13, random.Random(0))
    assert 0 <= v.value < 13
    assert scalar_rand(z13, random.Random(0)) == v
    assert scalar_rand(curve, random.Random(1)) != scalar_rand(curve, random.Random(2))


def test_transparent_mul_and_add(z13):
    G = z13.generator
    assert mul(3, G) == z13.element(3)
    assert add(mul(5, G), mul(9, G)) == z13.element(1)


def test_add_neg_is_identity(params):
    P = base_mul(77, params)
    assert add(P, neg(P)).is_identity


def test_mixed_params_rejected(z13, curve):
    with pytest.raises(ParameterMismatch):
        mul(Scalar(z13, 3), curve.generator)
    with pytest.raises(ParameterMismatch):
        add(z13.generator, transparent(17).generator)


def test_toy_hash_examples(toy13):
    assert hash_to_scalar(bytes([5, 9]), toy13) == 1
    assert prf(bytes([1]), 2, toy13) == 3


def test_hash_to_scalar_total_and_deterministic(curve):
    assert 0 <= hash_to_scalar(b"", curve).value < curve.n
    assert hash_to_scalar(b"abc", curve) == hash_to_scalar(b"abc", curve)


def test_prf_distinct_indices_and_empty_key(curve):
    s = b"k" * 32
    assert prf(s, 1, curve) == prf(s, 1, curve)
    assert prf(s, 1, curve) != prf(s, 2, curve)
    with pytest.raises(InvalidKey):
        prf(b"", 1, curve)


scalars = st.integers(min_value=0, max_value=2**300)


@given(scalars, scalars, scalars)
def test_group_laws_transparent(a, b, c):
    z = transparent(257)
    P, Q, R = base_mul(a, z), base_mul(b, z), base_mul(c, z)
    assert (P + Q) + R == P + (Q + R)
    assert P + Q == Q + P
    assert mul(a + b, R) == mul(a, R) + mul(b, R)
    assert mul(c, P + Q) == mul(c, P) + mul(c, Q)


@settings(max_examples=10)
@given(scalars, scalars, scalars)
def test_group_laws_curve(a, b, c):
    g = p256()
    P, Q = base_mul(a, g), base_mul(b, g)
    assert P + Q == Q + P == base_mul(a + b, g)
    assert mul(c, P + Q) == mul(c, P) + mul(c, Q)
    assert (P + Q) + g.generator == P + (Q + g.generator)


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=12))
def test_scalar_inverse_and_arith(a, b):
    z = transparent(13)
    x = Scalar(z, a)
    assert x * x.inverse() == 1
    assert (x - b) + b == x
    assert -x + x == 0
