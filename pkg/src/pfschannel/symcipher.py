"""AES-128 block cipher and a CTR-mode envelope.

The S-box and round tables are computed at import time from the field
arithmetic in GF(2^8); no table is pasted in.  CTR provides confidentiality
only: there is no integrity tag.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import BadBlockLength

BLOCK = 16
KEY_LEN = 16
_ROUNDS = 10


def _xtime(b: int) -> int:
    b <<= 1
    return (b ^ 0x11B) if b & 0x100 else b


def _gmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = _xtime(a)
        b >>= 1
    return out


def _build_sbox():
    inv = [0] * 256
    for x in range(1, 256):
        for y in range(1, 256):
            if _gmul(x, y) == 1:
                inv[x] = y
                break
    sbox = [0] * 256
    for x in range(256):
        b = inv[x]
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        sbox[x] = s ^ 0x63
    inv_sbox = [0] * 256
    for x, s in enumerate(sbox):
        inv_sbox[s] = x
    return sbox, inv_sbox


SBOX, INV_SBOX = _build_sbox()

# Encryption T-tables: SubBytes + MixColumns column contribution, packed
# big-endian into a 32-bit word.
_TE = [[0] * 256 for _ in range(4)]
_TD = [[0] * 256 for _ in range(4)]
for _x in range(256):
    _s = SBOX[_x]
    _w = (_gmul(_s, 2) << 24) | (_s << 16) | (_s << 8) | _gmul(_s, 3)
    _i = INV_SBOX[_x]
    _v = (_gmul(_i, 14) << 24) | (_gmul(_i, 9) << 16) | (_gmul(_i, 13) << 8) | _gmul(_i, 11)
    for _r in range(4):
        _TE[_r][_x] = ((_w >> (8 * _r)) | (_w << (32 - 8 * _r))) & 0xFFFFFFFF
        _TD[_r][_x] = ((_v >> (8 * _r)) | (_v << (32 - 8 * _r))) & 0xFFFFFFFF
del _x, _s, _w, _i, _v, _r

_RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _expand_key(key: bytes) -> list[int]:
    w = [int.from_bytes(key[4 * i:4 * i + 4], "big") for i in range(4)]
    for i in range(4, 4 * (_ROUNDS + 1)):
        t = w[i - 1]
        if i % 4 == 0:
            t = ((t << 8) | (t >> 24)) & 0xFFFFFFFF
            t = (SBOX[t >> 24] << 24) | (SBOX[(t >> 16) & 0xFF] << 16) | \
                (SBOX[(t >> 8) & 0xFF] << 8) | SBOX[t & 0xFF]
            t ^= _RCON[i // 4 - 1] << 24
        w.append(w[i - 4] ^ t)
    return w


def _inv_mix_word(w: int) -> int:
    # InvMixColumns on one key word, for the equivalent inverse cipher.
    return (_TD[0][SBOX[w >> 24]] ^ _TD[1][SBOX[(w >> 16) & 0xFF]]
            ^ _TD[2][SBOX[(w >> 8) & 0xFF]] ^ _TD[3][SBOX[w & 0xFF]])


class BlockKey:
    """A 16-byte AES key with its cached round keys.

    ``wipe()`` zeroes the key bytes and the schedule in place; a wiped key
    must not be used again.
    """

    __slots__ = ("_key", "_enc", "_dec")

    def __init__(self, key: bytes):
        if len(key) != KEY_LEN:
            raise ValueError(f"AES-128 key must be {KEY_LEN} bytes, got {len(key)}")
        self._key = bytearray(key)
        self._enc = _expand_key(bytes(key))
        dec = []
        for rnd in range(_ROUNDS, -1, -1):
            words = self._enc[4 * rnd:4 * rnd + 4]
            if 0 < rnd < _ROUNDS:
                words = [_inv_mix_word(x) for x in words]
            dec.extend(words)
        self._dec = dec

    @property
    def bytes(self) -> bytes:
        return bytes(self._key)

    @property
    def round_keys(self) -> list[int]:
        return list(self._enc)

    def wipe(self) -> None:
        for i in range(len(self._key)):
            self._key[i] = 0
        for i in range(len(self._enc)):
            self._enc[i] = 0
            self._dec[i] = 0

    def __eq__(self, other):
        return isinstance(other, BlockKey) and self._key == other._key

    def __hash__(self):
        return hash(bytes(self._key))

    def __getstate__(self):
        return {"key": bytes(self._key), "enc": list(self._enc), "dec": list(self._dec)}

    def __setstate__(self, state):
        self._key = bytearray(state["key"])
        self._enc = list(state["enc"])
        self._dec = list(state["dec"])

    def __repr__(self):
        return "BlockKey(<secret>)"


def _as_key(k) -> BlockKey:
    return k if isinstance(k, BlockKey) else BlockKey(k)


def block_encrypt(k: BlockKey | bytes, block: bytes) -> bytes:
    if len(block) != BLOCK:
        raise BadBlockLength(f"block must be {BLOCK} bytes, got {len(block)}")
    rk = _as_key(k)._enc
    t0, t1, t2, t3 = _TE
    s0 = int.from_bytes(block[0:4], "big") ^ rk[0]
    s1 = int.from_bytes(block[4:8], "big") ^ rk[1]
    s2 = int.from_bytes(block[8:12], "big") ^ rk[2]
    s3 = int.from_bytes(block[12:16], "big") ^ rk[3]
    for rnd in range(1, _ROUNDS):
        o = 4 * rnd
        s0, s1, s2, s3 = (
            t0[s0 >> 24] ^ t1[(s1 >> 16) & 0xFF] ^ t2[(s2 >> 8) & 0xFF] ^ t3[s3 & 0xFF] ^ rk[o],
            t0[s1 >> 24] ^ t1[(s2 >> 16) & 0xFF] ^ t2[(s3 >> 8) & 0xFF] ^ t3[s0 & 0xFF] ^ rk[o + 1],
            t0[s2 >> 24] ^ t1[(s3 >> 16) & 0xFF] ^ t2[(s0 >> 8) & 0xFF] ^ t3[s1 & 0xFF] ^ rk[o + 2],
            t0[s3 >> 24] ^ t1[(s0 >> 16) & 0xFF] ^ t2[(s1 >> 8) & 0xFF] ^ t3[s2 & 0xFF] ^ rk[o + 3],
        )
    sb = SBOX
    out = bytearray(16)
    cols = (s0, s1, s2, s3)
    for c in range(4):
        w = ((sb[cols[c] >> 24] << 24)
             | (sb[(cols[(c + 1) % 4] >> 16) & 0xFF] << 16)
             | (sb[(cols[(c + 2) % 4] >> 8) & 0xFF] << 8)
             | sb[cols[(c + 3) % 4] & 0xFF]) ^ rk[40 + c]
        out[4 * c:4 * c + 4] = w.to_bytes(4, "big")
    return bytes(out)


def block_decrypt(k: BlockKey | bytes, block: bytes) -> bytes:
    if len(block) != BLOCK:
        raise BadBlockLength(f"block must be {BLOCK} bytes, got {len(block)}")
    rk = _as_key(k)._dec
    t0, t1, t2, t3 = _TD
    s0 = int.from_bytes(block[0:4], "big") ^ rk[0]
    s1 = int.from_bytes(block[4:8], "big") ^ rk[1]
    s2 = int.from_bytes(block[8:12], "big") ^ rk[2]
    s3 = int.from_bytes(block[12:16], "big") ^ rk[3]
    for rnd in range(1, _ROUNDS):
        o = 4 * rnd
        s0, s1, s2, s3 = (
            t0[s0 >> 24] ^ t1[(s3 >> 16) & 0xFF] ^ t2[(s2 >> 8) & 0xFF] ^ t3[s1 & 0xFF] ^ rk[o],
            t0[s1 >> 24] ^ t1[(s0 >> 16) & 0xFF] ^ t2[(s3 >> 8) & 0xFF] ^ t3[s2 & 0xFF] ^ rk[o + 1],
            t0[s2 >> 24] ^ t1[(s1 >> 16) & 0xFF] ^ t2[(s0 >> 8) & 0xFF] ^ t3[s3 & 0xFF] ^ rk[o + 2],
            t0[s3 >> 24] ^ t1[(s2 >> 16) & 0xFF] ^ t2[(s1 >> 8) & 0xFF] ^ t3[s0 & 0xFF] ^ rk[o + 3],
        )
    ib = INV_SBOX
    out = bytearray(16)
    cols = (s0, s1, s2, s3)
    for c in range(4):
        w = ((ib[cols[c] >> 24] << 24)
             | (ib[(cols[(c + 3) % 4] >> 16) & 0xFF] << 16)
             | (ib[(cols[(c + 2) % 4] >> 8) & 0xFF] << 8)
             | ib[cols[(c + 1) % 4] & 0xFF]) ^ rk[40 + c]
        out[4 * c:4 * c + 4] = w.to_bytes(4, "big")
    return bytes(out)


# -- CTR ---------------------------------------------------------------------

@dataclass(frozen=True)
class CtrEnvelope:
    nonce: bytes
    ciphertext: bytes

    def __post_init__(self):
        if len(self.nonce) != BLOCK:
            raise ValueError(f"nonce must be {BLOCK} bytes")


def counter_block(nonce: bytes, i: int) -> bytes:
    """The i-th counter block: nonce with its last 4 bytes incremented by i (mod 2^32)."""
    ctr = (int.from_bytes(nonce[12:], "big") + i) & 0xFFFFFFFF
    return nonce[:12] + ctr.to_bytes(4, "big")


def keystream(k: BlockKey | bytes, nonce: bytes, length: int) -> bytes:
    k = _as_key(k)
    blocks = (length + BLOCK - 1) // BLOCK
    out = b"".join(block_encrypt(k, counter_block(nonce, i)) for i in range(blocks))
    return out[:length]


def seal(k: BlockKey | bytes, nonce: bytes, plaintext: bytes) -> CtrEnvelope:
    ks = keystream(k, nonce, len(plaintext))
    ct = (int.from_bytes(plaintext, "big") ^ int.from_bytes(ks, "big")).to_bytes(len(plaintext), "big")
    return CtrEnvelope(bytes(nonce), ct)


def open_envelope(k: BlockKey | bytes, env: CtrEnvelope) -> bytes:
    return seal(k, env.nonce, env.ciphertext).ciphertext
