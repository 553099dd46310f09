"""Session keys, the record layer and the disconnect-recovery lifecycle.

Record wire layout::

    epoch (4) | seq (8) | ciphertext

Records are sealed with AES-CTR under the session key.  The nonce is
``epoch | seq | 00000000``, with the top bit of the sequence field set for
records sent by the responder so the two directions never share a keystream.

Disconnect rules, measured from ``mark_disconnected`` to ``attempt_resume``:
up to 30 s the old key is reused; up to 600 s a new key agreement is
required; beyond that the session is destroyed.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Callable

from .curve import INFINITY, CurveParams, CurvePoint, encode_point
from .errors import BadState, DegenerateKey, EpochMismatch, NotActive, ReplayedSequence
from .handshake import Role
from .sig import md5
from .symcipher import BlockKey, CtrEnvelope, open_envelope, seal

RESUME_WINDOW = 30.0
DESTROY_AFTER = 600.0
_RESPONDER_BIT = 1 << 63
_SEQ_LIMIT = 1 << 63

Clock = Callable[[], float]


class ManualClock:
    """Clock for tests and the simulator; time only moves when told to."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> float:
        self.now += seconds
        return self.now


@dataclass
class SessionKey:
    key: BlockKey
    established_at: float
    epoch: int = 0


def derive(shared: CurvePoint, params: CurveParams, clock: Clock = time.time, epoch: int = 0) -> SessionKey:
    """Session key = md5(encode_point(shared point))."""
    if shared is INFINITY:
        raise DegenerateKey("cannot derive a session key from the point at infinity")
    return SessionKey(BlockKey(md5(encode_point(params, shared))), clock(), epoch)


class SessionState(str, enum.Enum):
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    RENEGOTIATING = "Renegotiating"
    CLOSED = "Closed"


class ResumeDecision(str, enum.Enum):
    RESUME_WITH_SAME_KEY = "ResumeWithSameKey"
    REQUIRE_RENEGOTIATION = "RequireRenegotiation"
    SESSION_DESTROYED = "SessionDestroyed"


@dataclass(frozen=True)
class RecordMessage:
    epoch: int
    seq: int
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return self.epoch.to_bytes(4, "big") + self.seq.to_bytes(8, "big") + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "RecordMessage":
        if len(data) < 12:
            raise ValueError("record shorter than its 12-byte header")
        return cls(int.from_bytes(data[:4], "big"), int.from_bytes(data[4:12], "big"), bytes(data[12:]))


def record_nonce(epoch: int, seq: int, sender: Role) -> bytes:
    tagged = seq | _RESPONDER_BIT if sender is Role.RESPONDER else seq
    return epoch.to_bytes(4, "big") + tagged.to_bytes(8, "big") + b"\x00" * 4


class Session:
    """One side of an established channel.

    Not thread safe: callers serialize send/recv on the same session.
    """

    def __init__(self, key: SessionKey, role: Role | str, clock: Clock = time.time):
        self.key: SessionKey | None = key
        self.role = Role(role)
        self.peer_role = Role.RESPONDER if self.role is Role.INITIATOR else Role.INITIATOR
        self.clock = clock
        self.state = SessionState.ACTIVE
        self.suspended_since: float | None = None
        self.send_seq = 0
        self.recv_seq: int | None = None  # last accepted

    @property
    def epoch(self) -> int:
        if self.key is None:
            raise NotActive("session is closed")
        return self.key.epoch

    def _require_active(self):
        if self.state is not SessionState.ACTIVE:
            raise NotActive(f"session is {self.state.value}")

    def send(self, plaintext: bytes) -> RecordMessage:
        self._require_active()
        seq = self.send_seq
        if seq >= _SEQ_LIMIT:
            raise NotActive("sequence space exhausted; renegotiate")
        env = seal(self.key.key, record_nonce(self.key.epoch, seq, self.role), plaintext)
        self.send_seq += 1
        return RecordMessage(self.key.epoch, seq, env.ciphertext)

    def recv(self, msg: RecordMessage | bytes) -> bytes:
        self._require_active()
        if not isinstance(msg, RecordMessage):
            msg = RecordMessage.from_bytes(msg)
        if msg.epoch != self.key.epoch:
            raise EpochMismatch(f"record epoch {msg.epoch} != session epoch {self.key.epoch}")
        if msg.seq >= _SEQ_LIMIT or (self.recv_seq is not None and msg.seq <= self.recv_seq):
            raise ReplayedSequence(f"sequence {msg.seq} not above last accepted {self.recv_seq}")
        nonce = record_nonce(msg.epoch, msg.seq, self.peer_role)
        plain = open_envelope(self.key.key, CtrEnvelope(nonce, msg.ciphertext))
        self.recv_seq = msg.seq
        return plain

    # -- lifecycle -----------------------------------------------------------

    def mark_disconnected(self, at: float | None = None) -> None:
        if self.state is not SessionState.ACTIVE:
            raise BadState(f"cannot suspend a {self.state.value} session")
        self.state = SessionState.SUSPENDED
        self.suspended_since = self.clock() if at is None else at

    def attempt_resume(self, at: float | None = None) -> ResumeDecision:
        if self.state is not SessionState.SUSPENDED:
            raise BadState(f"cannot resume a {self.state.value} session")
        now = self.clock() if at is None else at
        gap = now - self.suspended_since
        if gap <= RESUME_WINDOW:
            self.state = SessionState.ACTIVE
            self.suspended_since = None
            return ResumeDecision.RESUME_WITH_SAME_KEY
        if gap <= DESTROY_AFTER:
            self.state = SessionState.RENEGOTIATING
            return ResumeDecision.REQUIRE_RENEGOTIATION
        self.close()
        return ResumeDecision.SESSION_DESTROYED

    def install_rekey(self, new_key: SessionKey) -> None:
        if self.state is not SessionState.RENEGOTIATING:
            raise BadState(f"cannot install a new key in a {self.state.value} session")
        old = self.key
        new_key.epoch = old.epoch + 1
        old.key.wipe()
        self.key = new_key
        self.send_seq = 0
        self.recv_seq = None
        self.suspended_since = None
        self.state = SessionState.ACTIVE

    def close(self) -> None:
        if self.key is not None:
            self.key.key.wipe()
        self.key = None
        self.state = SessionState.CLOSED
        self.suspended_since = None

    def __repr__(self):
        return f"Session(role={self.role.value}, state={self.state.value})"


def send(sess: Session, plaintext: bytes) -> RecordMessage:
    return sess.send(plaintext)


def recv(sess: Session, msg: RecordMessage | bytes) -> bytes:
    return sess.recv(msg)
