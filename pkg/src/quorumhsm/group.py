"""Prime-order group abstraction used by every protocol in the package.

Two backends sit behind :class:`DomainParams`:

* ``Backend.CURVE``: NIST P-256, the production group.
* ``Backend.TRANSPARENT``: the additive integers modulo a prime ``n`` with
  generator 1, so ``x * G == x``.  Discrete logs are trivial, which makes it a
  brute-force oracle for every protocol identity.  Test use only.

Scalars and elements carry their parameters and refuse to mix with operands
from another group.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

from . import _p256
from .errors import InvalidKey, ParameterMismatch

SCALAR_LEN = 32
DIGEST_LEN = 32

TAG_COMMIT = b"commit"
TAG_CHALLENGE = b"challenge"
TAG_PRF = b"prf"
TAG_ENVELOPE = b"envelope"
TAG_NONCE = b"nonce"
TAG_DLEQ = b"dleq"
TAG_SEAL = b"seal"
TAG_MESSAGE = b"message"


class Backend(enum.Enum):
    CURVE = "curve"
    TRANSPARENT = "transparent"


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for q in small:
        if n % q == 0:
            return n == q
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    # deterministic for n < 3.3e24
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class DomainParams:
    """Group context ``(p, a, b, G, n, h)`` plus the backend selector.

    ``toy_hash`` swaps the scalar hash for a byte-sum modulo ``n``; it is only
    accepted on the transparent backend and exists so small examples can be
    checked by hand.
    """

    p: int
    a: int
    b: int
    G: object
    n: int
    h: int
    backend: Backend
    toy_hash: bool = False

    def __post_init__(self):
        if self.toy_hash and self.backend is not Backend.TRANSPARENT:
            raise ValueError("toy hash is only available on the transparent backend")

    @cached_property
    def generator(self) -> "GroupElement":
        return GroupElement(self, self.G)

    @cached_property
    def identity(self) -> "GroupElement":
        return GroupElement(self, None if self.backend is Backend.CURVE else 0)

    @property
    def element_len(self) -> int:
        return 33 if self.backend is Backend.CURVE else 4

    def scalar(self, value: int) -> "Scalar":
        return Scalar(self, value)

    def element(self, value: int) -> "GroupElement":
        """Transparent backend only: the residue ``value mod n`` as an element."""
        if self.backend is not Backend.TRANSPARENT:
            raise TypeError("integer elements exist only on the transparent backend")
        return GroupElement(self, value % self.n)

    def decode_element(self, data: bytes) -> "GroupElement":
        if len(data) != self.element_len:
            raise ValueError(f"element encoding must be {self.element_len} bytes")
        if self.backend is Backend.CURVE:
            return GroupElement(self, _p256.decode(bytes(data)))
        v = int.from_bytes(data, "big")
        if v >= self.n:
            raise ValueError("residue out of range")
        return GroupElement(self, v)

    def decode_scalar(self, data: bytes) -> "Scalar":
        if len(data) != SCALAR_LEN:
            raise ValueError(f"scalar encoding must be {SCALAR_LEN} bytes")
        v = int.from_bytes(data, "big")
        if v >= self.n:
            raise ValueError("scalar out of range")
        return Scalar(self, v)

    def describe(self) -> dict:
        return {"backend": self.backend.value, "n": self.n, "toy_hash": self.toy_hash}


def p256() -> DomainParams:
    return _P256


def transparent(n: int = 13, toy_hash: bool = False) -> DomainParams:
    if not _is_prime(n):
        raise ValueError(f"transparent group order must be prime, got {n}")
    if n >= 1 << 32:
        raise ValueError("transparent group order must fit in 4 bytes")
    return DomainParams(p=n, a=0, b=0, G=1 % n, n=n, h=1,
                        backend=Backend.TRANSPARENT, toy_hash=toy_hash)


def params_from_config(backend: str, n: int = 13, toy_hash: bool = False) -> DomainParams:
    if backend == Backend.CURVE.value:
        return p256()
    if backend == Backend.TRANSPARENT.value:
        return transparent(n, toy_hash)
    raise ValueError(f"unknown backend {backend!r}")


_P256 = DomainParams(p=_p256.P, a=_p256.A, b=_p256.B, G=(_p256.GX, _p256.GY),
                     n=_p256.N, h=_p256.H, backend=Backend.CURVE)


def _same(p1: DomainParams, p2: DomainParams) -> None:
    if p1 is not p2 and p1 != p2:
        raise ParameterMismatch("operands come from different domain parameters")


class Scalar:
    """An integer modulo the group order ``n``."""

    __slots__ = ("params", "value")

    def __init__(self, params: DomainParams, value: int):
        self.params = params
        self.value = int(value) % params.n

    def _other(self, other) -> int:
        if isinstance(other, Scalar):
            _same(self.params, other.params)
            return other.value
        if isinstance(other, int):
            return other
        return NotImplemented

    def __add__(self, other):
        v = self._other(other)
        if v is NotImplemented:
            return v
        return Scalar(self.params, self.value + v)

    __radd__ = __add__

    def __sub__(self, other):
        v = self._other(other)
        if v is NotImplemented:
            return v
        return Scalar(self.params, self.value - v)

    def __rsub__(self, other):
        v = self._other(other)
        if v is NotImplemented:
            return v
        return Scalar(self.params, v - self.value)

    def __mul__(self, other):
        if isinstance(other, GroupElement):
            return mul(self, other)
        v = self._other(other)
        if v is NotImplemented:
            return v
        return Scalar(self.params, self.value * v)

    __rmul__ = __mul__

    def __neg__(self):
        return Scalar(self.params, -self.value)

    def inverse(self) -> "Scalar":
        if self.value == 0:
            raise ZeroDivisionError("zero scalar has no inverse")
        return Scalar(self.params, pow(self.value, -1, self.params.n))

    def __eq__(self, other):
        if isinstance(other, Scalar):
            return self.params == other.params and self.value == other.value
        if isinstance(other, int):
            return self.value == other % self.params.n
        return NotImplemented

    def __hash__(self):
        return hash(("scalar", self.value))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"Scalar({self.value})"

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(SCALAR_LEN, "big")


class GroupElement:
    """An element of the group generated by ``G``; opaque apart from its encoding."""

    __slots__ = ("params", "rep")

    def __init__(self, params: DomainParams, rep):
        self.params = params
        self.rep = rep

    def __add__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return add(self, other)

    def __sub__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return add(self, neg(other))

    def __neg__(self):
        return neg(self)

    def __rmul__(self, k):
        if isinstance(k, (Scalar, int)):
            return mul(k, self)
        return NotImplemented

    @property
    def is_identity(self) -> bool:
        return self.rep is None or (self.params.backend is Backend.TRANSPARENT and self.rep == 0)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.params == other.params and self.rep == other.rep

    def __hash__(self):
        return hash(("element", self.encode()))

    def __repr__(self):
        if self.params.backend is Backend.TRANSPARENT:
            return f"GroupElement({self.rep})"
        return f"GroupElement({self.encode().hex()[:18]}...)"

    def encode(self) -> bytes:
        if self.params.backend is Backend.CURVE:
            return _p256.encode(self.rep)
        return int(self.rep).to_bytes(4, "big")


def mul(k: Union[Scalar, int], P: GroupElement) -> GroupElement:
    params = P.params
    if isinstance(k, Scalar):
        _same(k.params, params)
        k = k.value
    if params.backend is Backend.CURVE:
        return GroupElement(params, _p256.mul(P.rep, k))
    return GroupElement(params, k * P.rep % params.n)


def add(P: GroupElement, Q: GroupElement) -> GroupElement:
    _same(P.params, Q.params)
    if P.params.backend is Backend.CURVE:
        return GroupElement(P.params, _p256.add(P.rep, Q.rep))
    return GroupElement(P.params, (P.rep + Q.rep) % P.params.n)


def neg(P: GroupElement) -> GroupElement:
    if P.params.backend is Backend.CURVE:
        return GroupElement(P.params, _p256.neg(P.rep))
    return GroupElement(P.params, -P.rep % P.params.n)


def base_mul(k: Union[Scalar, int], params: DomainParams) -> GroupElement:
    return mul(k, params.generator)


def scalar_rand(params: DomainParams, rng: random.Random) -> Scalar:
    """Uniform scalar in ``[0, n)`` drawn from the caller's random source."""
    return Scalar(params, rng.randrange(params.n))


def digest(tag: bytes, *parts: bytes) -> bytes:
    """SHA3-256 over a length-prefixed tag followed by ``parts``."""
    h = hashlib.sha3_256()
    h.update(bytes([len(tag)]))
    h.update(tag)
    for part in parts:
        h.update(part)
    return h.digest()


def hash_to_scalar(data: bytes, params: DomainParams, tag: bytes = TAG_CHALLENGE) -> Scalar:
    """Digest interpreted big-endian, reduced mod ``n``.

    Under ``toy_hash`` the tag is ignored and the result is the byte sum mod ``n``.
    """
    if params.toy_hash:
        return Scalar(params, sum(data))
    return Scalar(params, int.from_bytes(digest(tag, data), "big"))


def encode_index(j: int) -> bytes:
    return int(j).to_bytes(8, "big")


def prf(s: bytes, j: int, params: DomainParams) -> Scalar:
    if not s:
        raise InvalidKey("PRF key must be non-empty")
    return hash_to_scalar(bytes(s) + encode_index(j), params, TAG_PRF)


def aggregate_elements(elements: Iterable[GroupElement], params: DomainParams) -> GroupElement:
    acc = params.identity
    for e in elements:
        acc = acc + e
    return acc
