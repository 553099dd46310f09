"""PSK-encrypted ECDH handshakes.

Protocol A: each side sends ``seal(K, encode(xG))`` and computes the shared
point from the peer's share.  Protocol B additionally appends an ECDSA
signature over ``md5(encode(xG))`` and checks it against a group directory.

Wire layout of one handshake message (integers big-endian)::

    version (1) | msg_type (1) | session_id (8) | nonce (16)
    | payload_len (2) | payload | [claim_len (1) | claim (UTF-8)]

The trailing sender claim is present only in Protocol B messages and travels
in the clear; the signature check against the directory is what binds it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .curve import (
    INFINITY,
    CurveParams,
    CurvePoint,
    Scalar,
    decode_point,
    encode_point,
    scalar_mul,
)
from .drbg import Drbg
from .errors import (
    BadLength,
    BadPhase,
    BadPrefix,
    DecryptGarbage,
    DegenerateShare,
    HandshakeAbort,
    MalformedMessage,
    MissingDirectory,
    MissingIdentity,
    SignatureInvalid,
    UnexpectedMessage,
    UnknownPeer,
)
from .keystore import GroupDirectory, LongTermKey
from .sig import EcSignature, KeyPair, ec_sign, ec_verify, md5
from .symcipher import BLOCK, CtrEnvelope, open_envelope, seal

VERSION = 0x01
SESSION_ID_LEN = 8
_HEADER_LEN = 1 + 1 + SESSION_ID_LEN + BLOCK + 2


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"

    @property
    def msg_type(self) -> int:
        return 0x01 if self is Role.INITIATOR else 0x02


class Protocol(str, enum.Enum):
    A = "A"
    B = "B"


class Phase(str, enum.Enum):
    START = "Start"
    SENT_SHARE = "SentShare"
    ESTABLISHED = "Established"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class HandshakeMessage:
    msg_type: int
    session_id: bytes
    nonce: bytes
    payload: bytes
    sender_claim: str | None = None
    version: int = VERSION

    def to_bytes(self) -> bytes:
        out = (bytes([self.version, self.msg_type]) + self.session_id + self.nonce
               + len(self.payload).to_bytes(2, "big") + self.payload)
        if self.sender_claim is not None:
            claim = self.sender_claim.encode("utf-8")
            if len(claim) > 0xFF:
                raise ValueError("sender claim longer than 255 bytes")
            out += bytes([len(claim)]) + claim
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "HandshakeMessage":
        if len(data) < _HEADER_LEN:
            raise MalformedMessage("handshake message shorter than its header")
        if data[0] != VERSION:
            raise MalformedMessage(f"unsupported version 0x{data[0]:02x}")
        if data[1] not in (0x01, 0x02):
            raise MalformedMessage(f"unknown message type 0x{data[1]:02x}")
        sid = data[2:2 + SESSION_ID_LEN]
        nonce = data[2 + SESSION_ID_LEN:2 + SESSION_ID_LEN + BLOCK]
        plen = int.from_bytes(data[_HEADER_LEN - 2:_HEADER_LEN], "big")
        end = _HEADER_LEN + plen
        if len(data) < end:
            raise MalformedMessage("payload_len exceeds message size")
        payload, rest = data[_HEADER_LEN:end], data[end:]
        claim = None
        if rest:
            if rest[0] != len(rest) - 1:
                raise MalformedMessage("sender claim length mismatch")
            try:
                claim = rest[1:].decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedMessage("sender claim is not UTF-8") from None
        return cls(data[1], sid, nonce, payload, claim, data[0])


@dataclass
class HandshakeState:
    role: Role
    protocol: Protocol
    params: CurveParams
    psk: LongTermKey
    rng: Drbg
    identity: KeyPair | None = None
    directory: GroupDirectory | None = None
    phase: Phase = Phase.START
    ephemeral: Scalar | None = None
    share: CurvePoint | None = None
    peer_share: CurvePoint | None = None
    peer_id: str | None = None
    session_id: bytes = b""
    peer_session_id: bytes | None = None
    abort_reason: str | None = None
    messages: list[bytes] = field(default_factory=list)

    def _abort(self, exc: HandshakeAbort) -> None:
        self.phase = Phase.ABORTED
        self.abort_reason = type(exc).__name__
        if self.ephemeral is not None:
            self.ephemeral.destroy()

    def __repr__(self):
        return f"HandshakeState(role={self.role.value}, protocol={self.protocol.value}, phase={self.phase.value})"


def _payload_for(state: HandshakeState) -> bytes:
    body = encode_point(state.params, state.share)
    if state.protocol is Protocol.B:
        sig = ec_sign(state.params, state.identity, md5(body), state.rng)
        body += sig.to_bytes(state.params)
    return body


def start(role: Role | str, protocol: Protocol | str, psk: LongTermKey, params: CurveParams,
          rng: Drbg, identity: KeyPair | None = None,
          directory: GroupDirectory | None = None) -> tuple[HandshakeState, HandshakeMessage]:
    """Draw an ephemeral scalar and emit this side's sealed share."""
    role, protocol = Role(role), Protocol(protocol)
    if protocol is Protocol.B:
        if identity is None:
            raise MissingIdentity("Protocol B needs a signing identity")
        if directory is None:
            raise MissingDirectory("Protocol B needs a group directory")
    state = HandshakeState(role, protocol, params, psk, rng, identity, directory)
    state.ephemeral = rng.gen_scalar(params)
    state.share = scalar_mul(params, state.ephemeral, params.g)
    state.session_id = rng.next_bytes(SESSION_ID_LEN)
    nonce = rng.next_bytes(BLOCK)
    env = seal(psk.key, nonce, _payload_for(state))
    msg = HandshakeMessage(role.msg_type, state.session_id, nonce, env.ciphertext,
                           identity.owner if protocol is Protocol.B else None)
    state.messages.append(msg.to_bytes())
    state.phase = Phase.SENT_SHARE
    return state, msg


def _split_payload(state: HandshakeState, plain: bytes) -> tuple[bytes, EcSignature | None]:
    if state.protocol is Protocol.A:
        return plain, None
    siglen = 2 * state.params.field_len
    if len(plain) < siglen + 1:
        raise DecryptGarbage("payload too short for share and signature")
    return plain[:-siglen], EcSignature.from_bytes(state.params, plain[-siglen:])


def absorb(state: HandshakeState, msg: HandshakeMessage | bytes,
           sender_claim: str | None = None) -> CurvePoint:
    """Process the peer's share; return the raw shared point on success.

    Any rejection moves the state to Aborted, destroys the ephemeral scalar
    and re-raises the :class:`HandshakeAbort` subclass naming the reason.
    """
    if state.phase is not Phase.SENT_SHARE:
        raise BadPhase(f"absorb called in phase {state.phase.value}")
    raw = msg if isinstance(msg, (bytes, bytearray)) else msg.to_bytes()
    state.messages.append(bytes(raw))
    try:
        if isinstance(msg, (bytes, bytearray)):
            try:
                msg = HandshakeMessage.from_bytes(bytes(msg))
            except MalformedMessage as exc:
                raise DecryptGarbage(f"unparseable frame: {exc}") from None
        return _absorb(state, msg, sender_claim)
    except HandshakeAbort as exc:
        state._abort(exc)
        raise


def _absorb(state: HandshakeState, msg: HandshakeMessage, sender_claim: str | None) -> CurvePoint:
    params = state.params
    if msg.msg_type == state.role.msg_type:
        raise UnexpectedMessage("received a share with our own message type")
    plain = open_envelope(state.psk.key, CtrEnvelope(msg.nonce, msg.payload))
    point_bytes, sig = _split_payload(state, plain)
    try:
        peer = decode_point(params, point_bytes)
    except (BadLength, BadPrefix) as exc:
        raise DecryptGarbage(f"share does not decode: {exc}") from None
    if peer is INFINITY:
        raise DegenerateShare("peer share is the point at infinity")
    if params.h > 1 and scalar_mul(params, params.n, peer) is not INFINITY:
        raise DegenerateShare("peer share is outside the prime-order subgroup")

    if state.protocol is Protocol.B:
        claim = sender_claim if sender_claim is not None else msg.sender_claim
        if claim is None:
            raise UnknownPeer("Protocol B message carries no sender claim")
        public = state.directory.lookup(claim)
        if not ec_verify(params, public, md5(point_bytes), sig):
            raise SignatureInvalid(f"share signature does not verify for {claim!r}")
        state.peer_id = claim

    shared = scalar_mul(params, state.ephemeral, peer)
    if shared is INFINITY:
        raise DegenerateShare("shared point is the point at infinity")
    state.ephemeral.destroy()
    state.peer_share = peer
    state.peer_session_id = msg.session_id
    state.phase = Phase.ESTABLISHED
    return shared


def transcript_bytes(state: HandshakeState) -> bytes:
    return b"".join(state.messages)
