"""Exception hierarchy shared by every module in the package.

A few names (``NotOnCurve``, ``UnknownPeer``) are both a low-level failure and
a reason to abort a handshake, so they inherit from both branches.
"""


class ChannelError(Exception):
    """Base class for all errors raised by pfschannel."""


# -- curve -------------------------------------------------------------------

class ParameterError(ChannelError):
    pass


class MalformedDocument(ParameterError):
    pass


class PointNotOnCurve(ParameterError):
    pass


class CompositeOrder(ParameterError):
    pass


class WrongOrder(ParameterError):
    pass


class DestroyedScalar(ChannelError):
    """Raised when reading a scalar whose value has been erased."""


class DecodeError(ChannelError):
    pass


class BadLength(DecodeError):
    pass


class BadPrefix(DecodeError):
    pass


# -- symcipher / drbg --------------------------------------------------------

class BadBlockLength(ChannelError):
    pass


class InsufficientEntropy(ChannelError):
    pass


class ReseedRequired(ChannelError):
    pass


# -- handshake ---------------------------------------------------------------

class HandshakeError(ChannelError):
    pass


class MissingIdentity(HandshakeError):
    pass


class MissingDirectory(HandshakeError):
    pass


class BadPhase(HandshakeError):
    pass


class MalformedMessage(HandshakeError):
    """Handshake frame does not parse (wrong version, length mismatch...)."""


class HandshakeAbort(HandshakeError):
    """The peer's share was rejected; the handshake state is now Aborted."""


class DecryptGarbage(HandshakeAbort):
    pass


class SignatureInvalid(HandshakeAbort):
    pass


class DegenerateShare(HandshakeAbort):
    pass


class UnexpectedMessage(HandshakeAbort):
    """A share carrying our own message type (reflection) was received."""


class NotOnCurve(DecodeError, HandshakeAbort):
    pass


# -- keystore ----------------------------------------------------------------

class KeystoreError(ChannelError):
    pass


class BadMagic(KeystoreError):
    pass


class BadKeyFileLength(KeystoreError, BadLength):
    pass


class IoFailure(KeystoreError):
    pass


class DuplicateId(KeystoreError):
    pass


class DirectoryFormatError(KeystoreError):
    pass


class UnknownPeer(KeystoreError, HandshakeAbort):
    pass


# -- session -----------------------------------------------------------------

class SessionError(ChannelError):
    pass


class DegenerateKey(SessionError):
    pass


class NotActive(SessionError):
    pass


class ReplayedSequence(SessionError):
    pass


class EpochMismatch(SessionError):
    pass


class BadState(SessionError):
    pass


# -- simnet ------------------------------------------------------------------

class ScriptError(ChannelError):
    pass


class CapabilityError(ChannelError):
    """An adversary asked the harness for a secret it was not granted."""


class UnknownScenario(ChannelError):
    pass
