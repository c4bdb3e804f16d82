"""Short Weierstrass arithmetic over NIST P-256.

Points are affine ``(x, y)`` tuples with ``None`` as the point at infinity.
Internally multiplication runs in Jacobian coordinates (a = -3 doubling) and
uses mixed additions against precomputed affine tables. Not constant time.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import List, Optional, Tuple

from gmpy2 import mpz

P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5
H = 1

_P = mpz(P)

Point = Optional[Tuple[int, int]]
_Jac = Tuple[int, int, int]

_WINDOW = 4
_WINDOWS = 256 // _WINDOW
_INF: _Jac = (1, 1, 0)


def on_curve(pt: Point) -> bool:
    if pt is None:
        return True
    x, y = pt
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - (x * x * x + A * x + B)) % _P == 0


def _to_affine(j: _Jac) -> Point:
    x, y, z = j
    if z == 0:
        return None
    zi = pow(z, -1, _P)
    zi2 = zi * zi % _P
    return (x * zi2 % _P, y * zi2 * zi % _P)


def _batch_affine(js: List[_Jac]) -> List[Point]:
    # Montgomery's trick: one inversion for the whole list.
    prefix = []
    acc = 1
    for _, _, z in js:
        prefix.append(acc)
        if z:
            acc = acc * z % _P
    inv = pow(acc, -1, _P)
    out: List[Point] = [None] * len(js)
    for i in range(len(js) - 1, -1, -1):
        x, y, z = js[i]
        if not z:
            continue
        zi = inv * prefix[i] % _P
        inv = inv * z % _P
        zi2 = zi * zi % _P
        out[i] = (x * zi2 % _P, y * zi2 * zi % _P)
    return out


def _double(j: _Jac) -> _Jac:
    x, y, z = j
    if z == 0 or y == 0:
        return _INF
    yy = y * y % _P
    s = 4 * x * yy % _P
    zz = z * z % _P
    m = 3 * (x - zz) * (x + zz) % _P
    x3 = (m * m - 2 * s) % _P
    y3 = (m * (s - x3) - 8 * yy * yy) % _P
    z3 = 2 * y * z % _P
    return (x3, y3, z3)


def _add_mixed(j: _Jac, q: Tuple[int, int]) -> _Jac:
    x1, y1, z1 = j
    x2, y2 = q
    if z1 == 0:
        return (x2, y2, 1)
    z1z1 = z1 * z1 % _P
    u2 = x2 * z1z1 % _P
    s2 = y2 * z1 * z1z1 % _P
    h = (u2 - x1) % _P
    r = (s2 - y1) % _P
    if h == 0:
        if r == 0:
            return _double(j)
        return _INF
    hh = h * h % _P
    hhh = h * hh % _P
    v = x1 * hh % _P
    x3 = (r * r - hhh - 2 * v) % _P
    y3 = (r * (v - x3) - y1 * hhh) % _P
    z3 = z1 * h % _P
    return (x3, y3, z3)


def _add_jac(j1: _Jac, j2: _Jac) -> _Jac:
    x1, y1, z1 = j1
    x2, y2, z2 = j2
    if z1 == 0:
        return j2
    if z2 == 0:
        return j1
    z1z1 = z1 * z1 % _P
    z2z2 = z2 * z2 % _P
    u1 = x1 * z2z2 % _P
    u2 = x2 * z1z1 % _P
    s1 = y1 * z2 * z2z2 % _P
    s2 = y2 * z1 * z1z1 % _P
    h = (u2 - u1) % _P
    r = (s2 - s1) % _P
    if h == 0:
        if r == 0:
            return _double(j1)
        return _INF
    hh = h * h % _P
    hhh = h * hh % _P
    v = u1 * hh % _P
    x3 = (r * r - hhh - 2 * v) % _P
    y3 = (r * (v - x3) - s1 * hhh) % _P
    z3 = z1 * z2 * h % _P
    return (x3, y3, z3)


def add(p1: Point, p2: Point) -> Point:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    return _to_affine(_add_mixed((p1[0], p1[1], 1), p2))


def neg(pt: Point) -> Point:
    if pt is None:
        return None
    return (pt[0], (-pt[1]) % _P)


def _comb_table(pt: Tuple[int, int]) -> List[List[Point]]:
    """Rows of d * 16^i * pt for d in 1..15, one row per 4-bit window."""
    jac_rows: List[_Jac] = []
    base: _Jac = (pt[0], pt[1], 1)
    for _ in range(_WINDOWS):
        acc = base
        jac_rows.append(acc)
        for _ in range(14):
            acc = _add_jac(acc, base)
            jac_rows.append(acc)
        base = _double(_double(_double(_double(base))))
    flat = _batch_affine(jac_rows)
    return [flat[i * 15:(i + 1) * 15] for i in range(_WINDOWS)]


def _mul_table(table: List[List[Point]], k: int) -> Point:
    acc = _INF
    i = 0
    while k:
        d = k & 15
        if d:
            q = table[i][d - 1]
            if q is not None:
                acc = _add_mixed(acc, q)
        k >>= 4
        i += 1
    return _to_affine(acc)


def _wnaf(k: int, w: int = 5) -> List[int]:
    out = []
    half = 1 << (w - 1)
    full = 1 << w
    while k:
        if k & 1:
            d = k & (full - 1)
            if d >= half:
                d -= full
            k -= d
        else:
            d = 0
        out.append(d)
        k >>= 1
    return out


def _mul_wnaf(pt: Tuple[int, int], k: int) -> Point:
    # odd multiples 1P, 3P, ..., 15P
    j = (pt[0], pt[1], 1)
    twice = _double(j)
    odd = [j]
    for _ in range(7):
        odd.append(_add_jac(odd[-1], twice))
    aff = _batch_affine(odd)
    digits = _wnaf(k)
    acc = _INF
    for d in reversed(digits):
        acc = _double(acc)
        if d > 0:
            q = aff[d >> 1]
            if q is not None:
                acc = _add_mixed(acc, q)
        elif d < 0:
            q = aff[(-d) >> 1]
            if q is not None:
                acc = _add_mixed(acc, (q[0], P - q[1]))
    return _to_affine(acc)


class _TableCache:
    """LRU of comb tables for points multiplied repeatedly (keys, generator)."""

    def __init__(self, maxsize: int = 512, promote_after: int = 8):
        self.maxsize = maxsize
        self.promote_after = promote_after
        self._tables: "OrderedDict[Tuple[int, int], List[List[Point]]]" = OrderedDict()
        self._hits: "OrderedDict[Tuple[int, int], int]" = OrderedDict()

    def get(self, pt: Tuple[int, int]):
        table = self._tables.get(pt)
        if table is not None:
            self._tables.move_to_end(pt)
            return table
        seen = self._hits.pop(pt, 0) + 1
        if seen < self.promote_after:
            self._hits[pt] = seen
            if len(self._hits) > 4 * self.maxsize:
                self._hits.popitem(last=False)
            return None
        table = _comb_table(pt)
        self._tables[pt] = table
        if len(self._tables) > self.maxsize:
            self._tables.popitem(last=False)
        return table


_cache = _TableCache()
_G_TABLE = _comb_table((mpz(GX), mpz(GY)))


def mul(pt: Point, k: int) -> Point:
    k %= N
    if pt is None or k == 0:
        return None
    if pt == (GX, GY):
        return _mul_table(_G_TABLE, k)
    table = _cache.get(pt)
    if table is not None:
        return _mul_table(table, k)
    return _mul_wnaf(pt, k)


def encode(pt: Point) -> bytes:
    if pt is None:
        return bytes(33)
    return bytes([2 | int(pt[1] & 1)]) + int(pt[0]).to_bytes(32, "big")


def decode(data: bytes) -> Point:
    if len(data) != 33:
        raise ValueError("P-256 point encoding must be 33 bytes")
    if data == bytes(33):
        return None
    prefix = data[0]
    if prefix not in (2, 3):
        raise ValueError("bad point prefix")
    x = mpz(int.from_bytes(data[1:], "big"))
    y = lift_x(x)
    if y is None:
        raise ValueError("x coordinate not on curve")
    if (y & 1) != (prefix & 1):
        y = P - y
    return (x, y)


def lift_x(x: int) -> Optional[int]:
    if not 0 <= x < P:
        return None
    rhs = (x * x * x + A * x + B) % _P
    y = pow(rhs, (P + 1) // 4, _P)
    if y * y % _P != rhs:
        return None
    return y
