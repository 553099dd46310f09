"""AES-counter random number generator.

Output is the AES-128 encryption of a 128-bit counter under a key folded
from the seed material, i.e. the CTR keystream of that key.  Seeding with
fixed bytes gives fully reproducible streams; production callers seed from
the OS via :meth:`Drbg.from_os`.
"""

from __future__ import annotations

import copy
import secrets

from .curve import CurveParams, Scalar
from .errors import InsufficientEntropy, ReseedRequired
from .symcipher import BLOCK, BlockKey, block_encrypt

MIN_ENTROPY = 16
BLOCK_BUDGET = 2 ** 32


def fold_entropy(entropy: bytes) -> bytes:
    """XOR every 16-byte chunk of ``entropy`` into the first one."""
    if len(entropy) < MIN_ENTROPY:
        raise InsufficientEntropy(f"need at least {MIN_ENTROPY} bytes of entropy, got {len(entropy)}")
    key = bytearray(entropy[:BLOCK])
    for off in range(BLOCK, len(entropy), BLOCK):
        for i, b in enumerate(entropy[off:off + BLOCK]):
            key[i] ^= b
    return bytes(key)


class Drbg:
    """Deterministic generator state: key, counter, blocks since seeding.

    Not thread safe; one instance belongs to one session.
    """

    def __init__(self, entropy: bytes, block_budget: int = BLOCK_BUDGET):
        self.key = BlockKey(fold_entropy(entropy))
        self.counter = 0
        self.reseed_counter = 0
        self.block_budget = block_budget

    @classmethod
    def from_os(cls) -> "Drbg":
        return cls(secrets.token_bytes(32))

    @classmethod
    def from_seed(cls, seed: int, label: str = "") -> "Drbg":
        """Reproducible generator for tests, transcripts and the simulator."""
        material = f"pfschannel-seed:{label}:{seed}".encode()
        return cls(material.ljust(MIN_ENTROPY, b"\x00"))

    def reseed(self, entropy: bytes) -> None:
        self.key.wipe()
        self.key = BlockKey(fold_entropy(entropy))
        self.counter = 0
        self.reseed_counter = 0

    def next_bytes(self, length: int) -> bytes:
        if length < 0:
            raise ValueError("length must be non-negative")
        blocks = (length + BLOCK - 1) // BLOCK
        if self.reseed_counter + blocks > self.block_budget:
            raise ReseedRequired("block budget for this seed is exhausted")
        out = bytearray()
        for _ in range(blocks):
            out += block_encrypt(self.key, self.counter.to_bytes(BLOCK, "big"))
            self.counter += 1
            self.reseed_counter += 1
        return bytes(out[:length])

    def gen_scalar(self, params: CurveParams) -> Scalar:
        """Rejection-sample a field-length integer until it lands in [1, n-1]."""
        while True:
            v = int.from_bytes(self.next_bytes(params.field_len), "big")
            if 1 <= v < params.n:
                return Scalar(v, params.n)

    def fork(self) -> "Drbg":
        """Independent copy with identical state (for oracles that predict draws)."""
        return copy.deepcopy(self)

    def __repr__(self):
        return f"Drbg(counter={self.counter})"


def seed(entropy: bytes) -> Drbg:
    return Drbg(entropy)


def next_bytes(state: Drbg, length: int) -> bytes:
    return state.next_bytes(length)


def gen_scalar(state: Drbg, params: CurveParams) -> Scalar:
    return state.gen_scalar(params)
