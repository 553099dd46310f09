"""MD5 and the ECDSA-style signature used to bind shares to identities.

MD5 is kept because the protocol mandates it; it is not collision resistant.
``sign_message``/``verify_message`` take a pluggable digest for callers that
want something stronger.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

from .curve import INFINITY, CurveParams, CurvePoint, Point, Scalar, point_add, scalar_mul
from .drbg import Drbg

DIGEST_LEN = 16

_S = [7, 12, 17, 22] * 4 + [5, 9, 14, 20] * 4 + [4, 11, 16, 23] * 4 + [6, 10, 15, 21] * 4
_K = [int(abs(math.sin(i + 1)) * 2 ** 32) & 0xFFFFFFFF for i in range(64)]


def _rotl(x: int, c: int) -> int:
    return ((x << c) | (x >> (32 - c))) & 0xFFFFFFFF


def md5(message: bytes) -> bytes:
    """RFC 1321 MD5 digest (16 bytes)."""
    msg = bytes(message)
    bit_len = (8 * len(msg)) & 0xFFFFFFFFFFFFFFFF
    msg += b"\x80" + b"\x00" * ((55 - len(msg)) % 64) + struct.pack("<Q", bit_len)
    a0, b0, c0, d0 = 0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476
    for off in range(0, len(msg), 64):
        m = struct.unpack_from("<16I", msg, off)
        a, b, c, d = a0, b0, c0, d0
        for i in range(64):
            if i < 16:
                f, g = (b & c) | (~b & d), i
            elif i < 32:
                f, g = (d & b) | (~d & c), (5 * i + 1) % 16
            elif i < 48:
                f, g = b ^ c ^ d, (3 * i + 5) % 16
            else:
                f, g = c ^ (b | (~d & 0xFFFFFFFF)), (7 * i) % 16
            f = (f + a + _K[i] + m[g]) & 0xFFFFFFFF
            a, d, c = d, c, b
            b = (b + _rotl(f, _S[i])) & 0xFFFFFFFF
        a0 = (a0 + a) & 0xFFFFFFFF
        b0 = (b0 + b) & 0xFFFFFFFF
        c0 = (c0 + c) & 0xFFFFFFFF
        d0 = (d0 + d) & 0xFFFFFFFF
    return struct.pack("<4I", a0, b0, c0, d0)


@dataclass
class KeyPair:
    private: Scalar
    public: Point
    owner: str

    def __repr__(self):
        return f"KeyPair(owner={self.owner!r}, public={self.public!r})"


@dataclass(frozen=True)
class EcSignature:
    r: int
    s: int

    def to_bytes(self, params: CurveParams) -> bytes:
        flen = params.field_len
        return self.r.to_bytes(flen, "big") + self.s.to_bytes(flen, "big")

    @classmethod
    def from_bytes(cls, params: CurveParams, data: bytes) -> "EcSignature":
        flen = params.field_len
        if len(data) != 2 * flen:
            raise ValueError(f"signature must be {2 * flen} bytes")
        return cls(int.from_bytes(data[:flen], "big"), int.from_bytes(data[flen:], "big"))


def _digest_int(params: CurveParams, digest: bytes) -> int:
    return int.from_bytes(digest, "big") % params.n


def ec_sign(params: CurveParams, kp: KeyPair, digest: bytes, rng: Drbg) -> EcSignature:
    e = _digest_int(params, digest)
    d = kp.private.value
    n = params.n
    while True:
        k = rng.gen_scalar(params)
        try:
            r = scalar_mul(params, k, params.g).x % n
            if r == 0:
                continue
            s = pow(k.value, -1, n) * (e + r * d) % n
            if s == 0:
                continue
            return EcSignature(r, s)
        finally:
            k.destroy()


def ec_verify(params: CurveParams, public: CurvePoint, digest: bytes, sig: EcSignature) -> bool:
    n = params.n
    if not (1 <= sig.r < n and 1 <= sig.s < n):
        return False
    if public is INFINITY or not params.is_on_curve(public):
        return False
    e = _digest_int(params, digest)
    w = pow(sig.s, -1, n)
    pt = point_add(params, scalar_mul(params, e * w % n, params.g), scalar_mul(params, sig.r * w % n, public))
    if pt is INFINITY:
        return False
    return pt.x % n == sig.r


def sign_message(params: CurveParams, kp: KeyPair, message: bytes, rng: Drbg,
                 digest: Callable[[bytes], bytes] = md5) -> EcSignature:
    return ec_sign(params, kp, digest(message), rng)


def verify_message(params: CurveParams, public: CurvePoint, message: bytes, sig: EcSignature,
                   digest: Callable[[bytes], bytes] = md5) -> bool:
    return ec_verify(params, public, digest(message), sig)
