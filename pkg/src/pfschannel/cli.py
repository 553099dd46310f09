"""Command-line front end.

Exit codes: 0 success, 1 scenario failure, 2 handshake abort, 3 I/O or key
file problem, 4 usage error.

Stream framing used by ``listen``/``connect``/``send-file``::

    type (1) | length (4, big-endian) | body

Types: 1 handshake message, 2 record, 3 close, 4 resume request (body =
epoch), 5 resume accepted, 6 renegotiation required, 7 session destroyed.
Status lines go to stderr; relayed payloads go to stdout unchanged.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
import threading
import time
from pathlib import Path

from . import handshake as hs
from .curve import CURVE_ENV, CurveParams, decode_point, encode_point, load_params
from .drbg import Drbg
from .errors import ChannelError, HandshakeAbort, HandshakeError, IoFailure, KeystoreError, ParameterError, UnknownScenario
from .keystore import (
    GroupDirectory,
    export_ltk,
    gen_identity,
    generate_ltk,
    import_ltk,
    load_identity,
    save_identity,
)
from .session import ResumeDecision, Session, SessionState, derive
from .simnet import SCENARIOS, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_ABORT, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3, 4

F_HANDSHAKE, F_RECORD, F_CLOSE, F_RESUME, F_RESUME_OK, F_RENEGOTIATE, F_DESTROYED = range(1, 8)
_MAX_FRAME = 1 << 24
_CHUNK = 4096


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _status(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# -- framing -----------------------------------------------------------------

class Link:
    """Framed, optionally recorded, socket wrapper."""

    def __init__(self, sock: socket.socket, transcript: list | None = None):
        self.sock = sock
        self.rfile = sock.makefile("rb")
        self.lock = threading.Lock()
        self.transcript = transcript

    def send(self, ftype: int, body: bytes = b"") -> None:
        with self.lock:
            if self.transcript is not None:
                self.transcript.append(f"> {ftype} {body.hex()}")
            self.sock.sendall(bytes([ftype]) + len(body).to_bytes(4, "big") + body)

    def recv(self) -> tuple[int, bytes] | None:
        head = self.rfile.read(5)
        if len(head) < 5:
            return None
        size = int.from_bytes(head[1:], "big")
        if size > _MAX_FRAME:
            raise IoFailure("oversized frame")
        body = self.rfile.read(size)
        if len(body) < size:
            return None
        if self.transcript is not None:
            self.transcript.append(f"< {head[0]} {body.hex()}")
        return head[0], body

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def _expect(link: Link, *types: int) -> tuple[int, bytes]:
    frame = link.recv()
    if frame is None:
        raise IoFailure("connection closed by peer")
    if frame[0] not in types:
        raise IoFailure(f"unexpected frame type {frame[0]}")
    return frame


# -- shared setup ------------------------------------------------------------

class Config:
    def __init__(self, args):
        self.params: CurveParams = load_params(args.curve or os.environ.get(CURVE_ENV, "sm2"))
        self.psk = import_ltk(args.psk)
        self.protocol = hs.Protocol(args.protocol)
        self.identity = self.directory = None
        if self.protocol is hs.Protocol.B:
            if not args.identity or not args.directory:
                raise UsageError("protocol B needs --identity and --directory")
            self.identity = load_identity(args.identity, self.params)
            self.directory = GroupDirectory.load(args.directory, self.params)
        self.seed = args.seed
        self.scale = args.time_scale
        self.transcript: list[str] | None = [] if args.transcript else None
        self.transcript_path = args.transcript
        self._round = 0

    def clock(self) -> float:
        return time.monotonic() * self.scale

    def rng(self, role: hs.Role) -> Drbg:
        self._round += 1
        if self.seed is None:
            return Drbg.from_os()
        return Drbg.from_seed(self.seed, f"cli-{role.value}-{self._round}")

    def save_transcript(self) -> None:
        if self.transcript_path:
            Path(self.transcript_path).write_text("\n".join(self.transcript) + "\n")


def _handshake(cfg: Config, link: Link, role: hs.Role) -> Session:
    """Initiator sends first; responder answers before checking the share."""
    if role is hs.Role.INITIATOR:
        state, msg = hs.start(role, cfg.protocol, cfg.psk, cfg.params, cfg.rng(role), cfg.identity, cfg.directory)
        link.send(F_HANDSHAKE, msg.to_bytes())
        _, peer = _expect(link, F_HANDSHAKE)
    else:
        _, peer = _expect(link, F_HANDSHAKE)
        state, msg = hs.start(role, cfg.protocol, cfg.psk, cfg.params, cfg.rng(role), cfg.identity, cfg.directory)
        link.send(F_HANDSHAKE, msg.to_bytes())
    shared = hs.absorb(state, peer)
    return Session(derive(shared, cfg.params, cfg.clock), role, cfg.clock)


def _reader(link: Link, session: Session, lock: threading.Lock, out, on_eof) -> None:
    try:
        while True:
            frame = link.recv()
            if frame is None:
                on_eof(False)
                return
            ftype, body = frame
            if ftype == F_CLOSE:
                on_eof(True)
                return
            if ftype == F_RECORD:
                with lock:
                    data = session.recv(body)
                out.write(data)
                out.flush()
    except (OSError, ValueError, ChannelError):
        on_eof(False)


# -- listen ------------------------------------------------------------------

def cmd_listen(args) -> int:
    cfg = Config(args)
    srv = socket.create_server((args.host, args.port))
    if args.port == 0:
        _status(f"listening port={srv.getsockname()[1]}")
    out = sys.stdout.buffer
    session: Session | None = None
    lock = threading.Lock()
    current: dict = {}

    def stdin_pump():
        for line in sys.stdin.buffer:
            with lock:
                link = current.get("link")
                if link is None or session is None or session.state is not SessionState.ACTIVE:
                    continue
                rec = session.send(line)
            link.send(F_RECORD, rec.to_bytes())

    if args.relay_stdin:
        threading.Thread(target=stdin_pump, daemon=True).start()

    try:
        while True:
            conn, _ = srv.accept()
            link = Link(conn, cfg.transcript)
            ftype_body = link.recv()
            if ftype_body is None:
                link.close()
                continue
            ftype, body = ftype_body
            if ftype == F_HANDSHAKE:
                session = _respond(cfg, link, body)
                _status(f"established epoch={session.epoch}")
            elif ftype == F_RESUME and session is not None:
                session = _resume_listener(cfg, link, session)
                if session is None:
                    continue
            else:
                link.send(F_DESTROYED)
                link.close()
                continue
            current["link"] = link
            clean = {}
            _reader(link, session, lock, out, lambda was_clean: clean.update(v=was_clean))
            current["link"] = None
            if clean.get("v"):
                with lock:
                    session.close()
                link.close()
                _status("closed")
                return EXIT_OK
            with lock:
                session.mark_disconnected()
            _status("peer disconnected; waiting for resume")
            link.close()
    finally:
        srv.close()
        cfg.save_transcript()


def _respond(cfg: Config, link: Link, first: bytes) -> Session:
    role = hs.Role.RESPONDER
    state, msg = hs.start(role, cfg.protocol, cfg.psk, cfg.params, cfg.rng(role), cfg.identity, cfg.directory)
    link.send(F_HANDSHAKE, msg.to_bytes())
    shared = hs.absorb(state, first)
    return Session(derive(shared, cfg.params, cfg.clock), role, cfg.clock)


def _resume_listener(cfg: Config, link: Link, session: Session) -> Session | None:
    decision = session.attempt_resume()
    if decision is ResumeDecision.RESUME_WITH_SAME_KEY:
        link.send(F_RESUME_OK)
        _status(f"resumed epoch={session.epoch}")
        return session
    if decision is ResumeDecision.REQUIRE_RENEGOTIATION:
        link.send(F_RENEGOTIATE)
        fresh = _respond(cfg, link, _expect(link, F_HANDSHAKE)[1])
        session.install_rekey(fresh.key)
        _status(f"renegotiated epoch={session.epoch}")
        return session
    link.send(F_DESTROYED)
    _status("session key destroyed after long disconnect")
    fresh = _respond(cfg, link, _expect(link, F_HANDSHAKE)[1])
    _status(f"established epoch={fresh.epoch}")
    return fresh


# -- connect -----------------------------------------------------------------

def _dial(addr: str) -> socket.socket:
    host, _, port = addr.rpartition(":")
    try:
        return socket.create_connection((host or "127.0.0.1", int(port)), timeout=30)
    except ValueError:
        raise UsageError(f"bad address {addr!r}; expected HOST:PORT") from None


def _client_reader(link, session, lock, out, state):
    def on_eof(was_clean):
        state["peer_closed"] = was_clean
        state["eof"].set()
    t = threading.Thread(target=_reader, args=(link, session, lock, out, on_eof), daemon=True)
    t.start()
    return t


def _reconnect(cfg: Config, addr: str, session: Session) -> tuple[Link, Session]:
    sock = _dial(addr)
    sock.settimeout(None)
    link = Link(sock, cfg.transcript)
    link.send(F_RESUME, session.epoch.to_bytes(4, "big"))
    ftype, _ = _expect(link, F_RESUME_OK, F_RENEGOTIATE, F_DESTROYED)
    return link, _apply_resume(cfg, link, session, ftype)


def _apply_resume(cfg: Config, link: Link, session: Session, ftype: int) -> Session:
    decision = session.attempt_resume()
    if ftype == F_RESUME_OK:
        if decision is not ResumeDecision.RESUME_WITH_SAME_KEY:
            raise IoFailure("peer resumed but local timer disagrees")
        _status(f"resumed epoch={session.epoch}")
        return session
    if ftype == F_RENEGOTIATE:
        if decision is not ResumeDecision.REQUIRE_RENEGOTIATION:
            raise IoFailure("peer asked for renegotiation but local timer disagrees")
        fresh = _handshake(cfg, link, hs.Role.INITIATOR)
        session.install_rekey(fresh.key)
        _status(f"renegotiated epoch={session.epoch}")
        return session
    if decision is not ResumeDecision.SESSION_DESTROYED:
        session.close()
    _status("session key destroyed after long disconnect")
    fresh = _handshake(cfg, link, hs.Role.INITIATOR)
    _status(f"established epoch={fresh.epoch}")
    return fresh


def _run_client(args, chunks) -> int:
    cfg = Config(args)
    sock = _dial(args.addr)
    sock.settimeout(None)
    link = Link(sock, cfg.transcript)
    try:
        session = _handshake(cfg, link, hs.Role.INITIATOR)
        _status(f"established epoch={session.epoch}")
        lock = threading.Lock()
        out = sys.stdout.buffer
        state = {"eof": threading.Event(), "peer_closed": False}
        reader = _client_reader(link, session, lock, out, state)
        sent = 0
        for chunk in chunks:
            with lock:
                rec = session.send(chunk)
            link.send(F_RECORD, rec.to_bytes())
            sent += 1
            if args.drop_after is not None and sent == args.drop_after:
                link.close()
                reader.join(timeout=5)
                with lock:
                    session.mark_disconnected()
                _status("dropped connection")
                time.sleep(args.reconnect_after / cfg.scale)
                state["eof"].clear()
                link, session = _reconnect(cfg, args.addr, session)
                reader = _client_reader(link, session, lock, out, state)
        link.send(F_CLOSE)
        state["eof"].wait(timeout=args.linger)
        link.close()
        return EXIT_OK
    finally:
        cfg.save_transcript()


def _stdin_lines():
    yield from sys.stdin.buffer


def _file_chunks(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror}") from exc
    for i in range(0, len(data), _CHUNK):
        yield data[i:i + _CHUNK]


def cmd_connect(args) -> int:
    return _run_client(args, _stdin_lines())


def cmd_send_file(args) -> int:
    return _run_client(args, _file_chunks(args.file))


# -- key material ------------------------------------------------------------

def _cmd_rng(args, label: str) -> Drbg:
    return Drbg.from_os() if args.seed is None else Drbg.from_seed(args.seed, label)


def cmd_keygen_ltk(args) -> int:
    key = generate_ltk(_cmd_rng(args, "ltk"), args.label)
    export_ltk(key, args.out)
    _status(f"wrote long-term key {args.label!r} to {args.out}")
    return EXIT_OK


def cmd_keygen_id(args) -> int:
    params = load_params(args.curve or os.environ.get(CURVE_ENV, "sm2"))
    kp = gen_identity(_cmd_rng(args, f"id-{args.id}"), params, args.id)
    save_identity(kp, params, args.out)
    if args.directory:
        _dir_add(params, args.directory, args.id, kp.public)
    print(f"{args.id} = {encode_point(params, kp.public).hex()}")
    return EXIT_OK


def _dir_add(params, path, party, public) -> None:
    directory = GroupDirectory.load(path, params) if Path(path).exists() else GroupDirectory(params)
    directory.add(party, public)
    directory.save(path)


def cmd_dir_add(args) -> int:
    params = load_params(args.curve or os.environ.get(CURVE_ENV, "sm2"))
    if args.identity:
        public = load_identity(args.identity, params).public
    elif args.public:
        public = decode_point(params, bytes.fromhex(args.public))
    else:
        raise UsageError("dir-add needs --public or --identity")
    _dir_add(params, args.directory, args.id, public)
    _status(f"added {args.id!r} to {args.directory}")
    return EXIT_OK


def cmd_dir_list(args) -> int:
    params = load_params(args.curve or os.environ.get(CURVE_ENV, "sm2"))
    directory = GroupDirectory.load(args.directory, params)
    print(f"curve = {directory.curve}")
    for party, pt in directory.entries.items():
        print(f"{party} = {encode_point(params, pt).hex()}")
    return EXIT_OK


# -- scenarios and vectors ---------------------------------------------------

def cmd_run_scenario(args) -> int:
    params = load_params(args.curve) if args.curve else None
    script = Path(args.script).read_text() if args.script else None
    options = {"trials": args.trials} if args.trials is not None and args.scenario == "S5" else {}
    report = run_scenario(args.scenario, seed=args.seed, params=params, script=script, **options)
    print(report.headline)
    if args.verbose:
        sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def golden_vectors(seed: int) -> dict:
    """Seeded handshake transcripts for conformance testing.

    Every secret in here is derived from the public seed, so the file may
    contain key bytes; it is written to disk, never printed.
    """
    vectors = []
    for curve in ("toy", "sm2"):
        params = load_params(curve)
        for protocol in (hs.Protocol.A, hs.Protocol.B):
            label = f"{params.name}-{protocol.value}"
            psk = generate_ltk(Drbg.from_seed(seed, f"vec-psk-{label}"), "vectors", created_at=0.0)
            ids = directory = None
            if protocol is hs.Protocol.B:
                directory = GroupDirectory(params)
                ids = {name: gen_identity(Drbg.from_seed(seed, f"vec-id-{label}-{name}"), params, name)
                       for name in ("alice", "bob")}
                for name, kp in ids.items():
                    directory.add(name, kp.public)
            a_state, a_msg = hs.start(hs.Role.INITIATOR, protocol, psk, params,
                                      Drbg.from_seed(seed, f"vec-a-{label}"),
                                      ids and ids["alice"], directory)
            b_state, b_msg = hs.start(hs.Role.RESPONDER, protocol, psk, params,
                                      Drbg.from_seed(seed, f"vec-b-{label}"),
                                      ids and ids["bob"], directory)
            shared = hs.absorb(b_state, a_msg)
            hs.absorb(a_state, b_msg)
            key = derive(shared, params, clock=lambda: 0.0)
            a_sess, b_sess = Session(key, hs.Role.INITIATOR), Session(derive(shared, params, clock=lambda: 0.0), hs.Role.RESPONDER)
            rec = a_sess.send(b"record vector")
            vectors.append({
                "curve": params.name,
                "protocol": protocol.value,
                "psk": psk.key.bytes.hex(),
                "initiator_message": a_msg.to_bytes().hex(),
                "responder_message": b_msg.to_bytes().hex(),
                "session_key": key.key.bytes.hex(),
                "record_plaintext": b"record vector".hex(),
                "record": rec.to_bytes().hex(),
                "record_opens": b_sess.recv(rec) == b"record vector",
            })
    return {"seed": seed, "vectors": vectors}


def cmd_vectors(args) -> int:
    Path(args.out).write_text(json.dumps(golden_vectors(args.seed), indent=2) + "\n")
    _status(f"wrote vectors to {args.out}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _channel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--psk", required=True, help="long-term key file")
    p.add_argument("--protocol", choices=["A", "B"], default="A")
    p.add_argument("--identity", help="private identity file (protocol B)")
    p.add_argument("--directory", help="group directory file (protocol B)")
    p.add_argument("--seed", type=int, help="deterministic DRBG seed (testing only)")
    p.add_argument("--transcript", help="write every frame sent/received to this file")
    p.add_argument("--time-scale", type=float, default=1.0,
                   help="protocol seconds per wall-clock second for the disconnect timers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pfschannel", description="PSK-authenticated ECDH secure channel")
    parser.add_argument("--curve", help=f"curve name (sm2, toy) or parameter file; default ${CURVE_ENV} or sm2")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen-ltk", help="generate a long-term pre-shared key file")
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_keygen_ltk)

    p = sub.add_parser("keygen-id", help="generate a signing identity")
    p.add_argument("--id", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--directory", help="also publish the public key to this directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_keygen_id)

    p = sub.add_parser("dir-add", help="add a public key to a group directory")
    p.add_argument("--directory", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--public", help="hex point encoding")
    p.add_argument("--identity", help="take the public key from an identity file")
    p.set_defaults(func=cmd_dir_add)

    p = sub.add_parser("dir-list", help="list a group directory")
    p.add_argument("--directory", required=True)
    p.set_defaults(func=cmd_dir_list)

    p = sub.add_parser("listen", help="accept one peer and relay records to stdout")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--relay-stdin", action="store_true", help="also send our stdin lines to the peer")
    _channel_flags(p)
    p.set_defaults(func=cmd_listen)

    for name, func in (("connect", cmd_connect), ("send-file", cmd_send_file)):
        p = sub.add_parser(name, help="connect to a listener and send " + ("stdin lines" if name == "connect" else "a file"))
        p.add_argument("addr", help="HOST:PORT")
        if name == "send-file":
            p.add_argument("file")
        _channel_flags(p)
        p.add_argument("--drop-after", type=int, help="drop the connection after this many records")
        p.add_argument("--reconnect-after", type=float, default=0.0,
                       help="protocol seconds to wait before reconnecting")
        p.add_argument("--linger", type=float, default=2.0, help="seconds to wait for the peer after closing")
        p.set_defaults(func=func)

    p = sub.add_parser("run-scenario", help="run an adversary scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--script", help="scenario script file")
    p.add_argument("--trials", type=int, help="trial count (S5)")
    p.add_argument("-v", "--verbose", action="store_true", help="print the full report")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("vectors", help="write seeded golden handshake vectors")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_vectors)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scenario", None) is not None and args.scenario not in SCENARIOS:
        _status(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _status(f"error: {exc}")
        return EXIT_USAGE
    except HandshakeAbort as exc:
        _status(f"handshake aborted: {type(exc).__name__}: {exc}")
        return EXIT_ABORT
    except UnknownScenario as exc:
        _status(f"error: {exc}")
        return EXIT_USAGE
    except (HandshakeError, KeystoreError, ParameterError, OSError) as exc:
        _status(f"error: {type(exc).__name__}: {exc}")
        return EXIT_IO
    except ChannelError as exc:
        _status(f"error: {type(exc).__name__}: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
