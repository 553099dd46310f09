"""Long-term pre-shared keys, identity key pairs and the group directory.

Key files are plaintext at rest.  They are only as safe as the filesystem
permissions on the path they are written to.

LTK file layout::

    "PFSK" | 0x01 | key (16 bytes) | label length (2 bytes, big-endian) | label (UTF-8)

Directory file layout (text)::

    # comment
    curve = <curve name>
    <party id> = 04<hex x><hex y>
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .curve import INFINITY, CurveParams, CurvePoint, Scalar, decode_point, encode_point, scalar_mul
from .drbg import Drbg
from .errors import (
    BadKeyFileLength,
    BadMagic,
    DecodeError,
    DirectoryFormatError,
    DuplicateId,
    IoFailure,
    UnknownPeer,
)
from .sig import KeyPair
from .symcipher import KEY_LEN, BlockKey

LTK_MAGIC = b"PFSK"
LTK_VERSION = 0x01
_LTK_HEADER = len(LTK_MAGIC) + 1


@dataclass
class LongTermKey:
    key: BlockKey
    label: str = ""
    created_at: float = 0.0

    def __repr__(self):
        return f"LongTermKey(label={self.label!r})"


def generate_ltk(rng: Drbg, label: str = "", created_at: float | None = None) -> LongTermKey:
    return LongTermKey(BlockKey(rng.next_bytes(KEY_LEN)), label,
                       time.time() if created_at is None else created_at)


def ltk_to_bytes(k: LongTermKey) -> bytes:
    label = k.label.encode("utf-8")
    if len(label) > 0xFFFF:
        raise ValueError("label too long")
    return LTK_MAGIC + bytes([LTK_VERSION]) + k.key.bytes + len(label).to_bytes(2, "big") + label


def ltk_from_bytes(data: bytes, created_at: float = 0.0) -> LongTermKey:
    if len(data) < _LTK_HEADER:
        raise BadKeyFileLength("key file truncated")
    if data[:4] != LTK_MAGIC or data[4] != LTK_VERSION:
        raise BadMagic("not a pfschannel long-term key file")
    body = data[_LTK_HEADER:]
    if len(body) < KEY_LEN + 2:
        raise BadKeyFileLength("key file truncated")
    label_len = int.from_bytes(body[KEY_LEN:KEY_LEN + 2], "big")
    if len(body) != KEY_LEN + 2 + label_len:
        raise BadKeyFileLength("label length does not match file size")
    try:
        label = body[KEY_LEN + 2:].decode("utf-8")
    except UnicodeDecodeError:
        raise BadMagic("label is not UTF-8") from None
    return LongTermKey(BlockKey(body[:KEY_LEN]), label, created_at)


def export_ltk(k: LongTermKey, path: str | os.PathLike) -> None:
    data = ltk_to_bytes(k)
    try:
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write key file {path}: {exc.strerror}") from exc


def import_ltk(path: str | os.PathLike) -> LongTermKey:
    try:
        data = Path(path).read_bytes()
        mtime = os.stat(path).st_mtime
    except OSError as exc:
        raise IoFailure(f"cannot read key file {path}: {exc.strerror}") from exc
    return ltk_from_bytes(data, created_at=mtime)


# -- identities --------------------------------------------------------------

def gen_identity(rng: Drbg, params: CurveParams, owner: str) -> KeyPair:
    if not owner:
        raise ValueError("identity needs a non-empty id")
    d = rng.gen_scalar(params)
    return KeyPair(d, scalar_mul(params, d, params.g), owner)


def save_identity(kp: KeyPair, params: CurveParams, path: str | os.PathLike) -> None:
    """Write a private identity file (curve, id, private scalar in hex)."""
    text = (
        "# pfschannel private identity; keep this file secret\n"
        f"curve = {params.name}\n"
        f"id = {kp.owner}\n"
        f"d = {kp.private.value:x}\n"
    )
    try:
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write identity file {path}: {exc.strerror}") from exc


def load_identity(path: str | os.PathLike, params: CurveParams) -> KeyPair:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read identity file {path}") from exc
    fields = dict(_kv_lines(text))
    try:
        curve, owner, d = fields["curve"], fields["id"], int(fields["d"], 16)
    except (KeyError, ValueError):
        raise DirectoryFormatError("identity file needs curve, id and d") from None
    if curve != params.name:
        raise DirectoryFormatError(f"identity is for curve {curve!r}, not {params.name!r}")
    try:
        priv = Scalar(d, params.n)
    except ValueError:
        raise DirectoryFormatError("private scalar out of range") from None
    return KeyPair(priv, scalar_mul(params, priv, params.g), owner)


def _kv_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise DirectoryFormatError(f"line {lineno}: expected 'key = value'")
        yield key.strip(), val.strip()


# -- group directory ---------------------------------------------------------

def _check_id(party: str) -> None:
    if not party or party != party.strip() or any(c in party for c in "=#\n\r"):
        raise ValueError(f"invalid party id {party!r}")


@dataclass
class GroupDirectory:
    params: CurveParams
    entries: dict[str, CurvePoint] = field(default_factory=dict)

    @property
    def curve(self) -> str:
        return self.params.name

    def add(self, party: str, public: CurvePoint) -> None:
        _check_id(party)
        if party in self.entries:
            raise DuplicateId(f"{party!r} is already in the directory")
        if public is INFINITY or not self.params.is_on_curve(public):
            raise ValueError(f"public key for {party!r} is not a valid curve point")
        self.entries[party] = public

    def lookup(self, party: str) -> CurvePoint:
        try:
            return self.entries[party]
        except KeyError:
            raise UnknownPeer(f"no directory entry for {party!r}") from None

    def remove(self, party: str) -> None:
        if self.entries.pop(party, None) is None:
            raise UnknownPeer(f"no directory entry for {party!r}")

    def __contains__(self, party):
        return party in self.entries

    def __len__(self):
        return len(self.entries)

    def to_text(self) -> str:
        lines = ["# pfschannel group directory (public keys only)", f"curve = {self.curve}"]
        for party, pt in self.entries.items():
            lines.append(f"{party} = {encode_point(self.params, pt).hex()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, params: CurveParams) -> "GroupDirectory":
        directory = cls(params)
        curve = None
        for key, val in _kv_lines(text):
            if curve is None:
                if key != "curve":
                    raise DirectoryFormatError("directory must start with a 'curve = ' header")
                if val != params.name:
                    raise DirectoryFormatError(f"directory is for curve {val!r}, not {params.name!r}")
                curve = val
                continue
            try:
                pt = decode_point(params, bytes.fromhex(val))
            except (ValueError, DecodeError) as exc:
                raise DirectoryFormatError(f"bad public key for {key!r}: {exc}") from None
            try:
                directory.add(key, pt)
            except ValueError as exc:
                raise DirectoryFormatError(str(exc)) from None
        if curve is None:
            raise DirectoryFormatError("missing 'curve = ' header")
        return directory

    def save(self, path: str | os.PathLike) -> None:
        try:
            Path(path).write_text(self.to_text(), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write directory {path}: {exc.strerror}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike, params: CurveParams) -> "GroupDirectory":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise IoFailure(f"cannot read directory {path}") from exc
        return cls.from_text(text, params)
