"""Prime-field short-Weierstrass curve arithmetic.

Points are affine with an explicit point at infinity.  Nothing here is
constant time; correctness and scalar erasure are the goals.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

from .errors import (
    BadLength,
    BadPrefix,
    CompositeOrder,
    DestroyedScalar,
    MalformedDocument,
    NotOnCurve,
    PointNotOnCurve,
    WrongOrder,
)

CURVE_ENV = "PFSCHANNEL_CURVE"
_BUILTIN = {"sm2": "sm2p256v1", "sm2p256v1": "sm2p256v1", "toy": "toy97", "toy97": "toy97"}
_REQUIRED = ("p", "a", "b", "gx", "gy", "n", "h")


class _Infinity:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


@dataclass(frozen=True)
class Point:
    x: int
    y: int


CurvePoint = Union[Point, _Infinity]


# Fixed witnesses keep primality checks reproducible.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin with fixed bases; deterministic below 3.3e24."""
    if n < 2:
        return False
    for q in _MR_BASES:
        if n % q == 0:
            return n == q
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for base in _MR_BASES:
        x = pow(base, d, n)
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
class CurveParams:
    name: str
    p: int
    a: int
    b: int
    g: Point
    n: int
    h: int

    @property
    def field_len(self) -> int:
        """Byte length of one encoded field element."""
        return (self.p.bit_length() + 7) // 8

    def is_on_curve(self, pt: CurvePoint) -> bool:
        if pt is INFINITY:
            return True
        x, y = pt.x, pt.y
        if not (0 <= x < self.p and 0 <= y < self.p):
            return False
        return (y * y - (x * x * x + self.a * x + self.b)) % self.p == 0

    def __repr__(self):
        return f"CurveParams(name={self.name!r}, bits={self.p.bit_length()})"


def parse_params(text: str, name: str | None = None) -> CurveParams:
    """Parse and validate a ``key = hex`` curve parameter document."""
    values: dict[str, int] = {}
    label = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip().lower(), val.strip()
        if not sep or not key or not val:
            raise MalformedDocument(f"line {lineno}: expected 'key = value'")
        if key == "name":
            label = val
            continue
        if key not in _REQUIRED:
            raise MalformedDocument(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise MalformedDocument(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = int(val, 16)
        except ValueError:
            raise MalformedDocument(f"line {lineno}: {key} is not hexadecimal") from None
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise MalformedDocument(f"missing keys: {', '.join(missing)}")

    p, a, b = values["p"], values["a"], values["b"]
    if p <= 3 or p % 2 == 0 or not is_probable_prime(p):
        raise MalformedDocument("p must be an odd prime greater than 3")
    if not (0 <= a < p and 0 <= b < p):
        raise MalformedDocument("coefficients must be reduced mod p")
    if (4 * a ** 3 + 27 * b ** 2) % p == 0:
        raise MalformedDocument("singular curve: 4a^3 + 27b^2 = 0 mod p")
    if values["h"] < 1:
        raise MalformedDocument("cofactor must be positive")

    params = CurveParams(
        name=name or label or "unnamed",
        p=p, a=a, b=b,
        g=Point(values["gx"], values["gy"]),
        n=values["n"], h=values["h"],
    )
    if not params.is_on_curve(params.g):
        raise PointNotOnCurve("base point does not satisfy the curve equation")
    if not is_probable_prime(params.n):
        raise CompositeOrder("n is not prime")
    if scalar_mul(params, params.n, params.g) is not INFINITY:
        raise WrongOrder("n*G is not the point at infinity")
    return params


def load_params(source: str | os.PathLike) -> CurveParams:
    """Load a curve by built-in name ("sm2", "toy") or from a parameter file."""
    key = str(source)
    if key in _BUILTIN:
        ref = resources.files("pfschannel") / "curves" / f"{_BUILTIN[key]}.curve"
        return parse_params(ref.read_text(encoding="utf-8"))
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise MalformedDocument(f"{path}: not UTF-8 text") from None
    return parse_params(text, name=None)


def default_params() -> CurveParams:
    return load_params(os.environ.get(CURVE_ENV, "sm2"))


# -- group law ---------------------------------------------------------------

def point_neg(params: CurveParams, pt: CurvePoint) -> CurvePoint:
    if pt is INFINITY:
        return pt
    return Point(pt.x, (-pt.y) % params.p)


def point_add(params: CurveParams, p1: CurvePoint, p2: CurvePoint) -> CurvePoint:
    if p1 is INFINITY:
        return p2
    if p2 is INFINITY:
        return p1
    p = params.p
    if p1.x == p2.x:
        if (p1.y + p2.y) % p == 0:
            return INFINITY
        lam = (3 * p1.x * p1.x + params.a) * pow(2 * p1.y, -1, p) % p
    else:
        lam = (p2.y - p1.y) * pow(p2.x - p1.x, -1, p) % p
    x3 = (lam * lam - p1.x - p2.x) % p
    y3 = (lam * (p1.x - x3) - p1.y) % p
    return Point(x3, y3)


def scalar_mul(params: CurveParams, k: Union["Scalar", int], q: CurvePoint) -> CurvePoint:
    """Left-to-right double-and-add."""
    if isinstance(k, Scalar):
        k = k.value
    if k < 0:
        raise ValueError("scalar must be non-negative")
    result: CurvePoint = INFINITY
    for bit in bin(k)[2:] if k else "":
        result = point_add(params, result, result)
        if bit == "1":
            result = point_add(params, result, q)
    return result


# -- wire form ---------------------------------------------------------------

def encode_point(params: CurveParams, q: CurvePoint) -> bytes:
    if q is INFINITY:
        return b"\x00"
    flen = params.field_len
    return b"\x04" + q.x.to_bytes(flen, "big") + q.y.to_bytes(flen, "big")


def decode_point(params: CurveParams, data: bytes) -> CurvePoint:
    if data == b"\x00":
        return INFINITY
    flen = params.field_len
    if len(data) != 1 + 2 * flen:
        raise BadLength(f"expected 1 or {1 + 2 * flen} bytes, got {len(data)}")
    if data[0] != 0x04:
        raise BadPrefix(f"unsupported point prefix 0x{data[0]:02x}")
    pt = Point(int.from_bytes(data[1:1 + flen], "big"), int.from_bytes(data[1 + flen:], "big"))
    if not params.is_on_curve(pt):
        raise NotOnCurve("decoded point is not on the curve")
    return pt


# -- erasable scalars --------------------------------------------------------

class Scalar:
    """Secret integer in [1, n-1] kept in a mutable buffer so it can be wiped.

    Python ints are immutable, so temporaries created by arithmetic cannot be
    scrubbed; only the buffer held here is.
    """

    __slots__ = ("_buf", "_destroyed")

    def __init__(self, value: int, n: int):
        if not 1 <= value <= n - 1:
            raise ValueError("scalar out of range [1, n-1]")
        self._buf = bytearray(value.to_bytes((n.bit_length() + 7) // 8, "big"))
        self._destroyed = False

    @property
    def value(self) -> int:
        if self._destroyed:
            raise DestroyedScalar("scalar has been destroyed")
        return int.from_bytes(self._buf, "big")

    @property
    def destroyed(self) -> bool:
        return self._destroyed

    def destroy(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self._destroyed = True

    def __getstate__(self):
        return {"buf": bytes(self._buf), "destroyed": self._destroyed}

    def __setstate__(self, state):
        self._buf = bytearray(state["buf"])
        self._destroyed = state["destroyed"]

    def __repr__(self):
        return "Scalar(<destroyed>)" if self._destroyed else "Scalar(<secret>)"


def destroy_scalar(s: Scalar) -> None:
    s.destroy()
