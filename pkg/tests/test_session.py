import pickle

import pytest

from oracles import ref_md5
from pfschannel.curve import INFINITY, encode_point, scalar_mul
from pfschannel.errors import BadState, DegenerateKey, EpochMismatch, NotActive, ReplayedSequence
from pfschannel.handshake import Role
from pfschannel.session import (
    DESTROY_AFTER,
    RESUME_WINDOW,
    ManualClock,
    RecordMessage,
    ResumeDecision,
    Session,
    SessionState,
    derive,
    record_nonce,
)
from pfschannel.symcipher import BlockKey


def make_pair(toy, k=5, clock=None):
    clock = clock or ManualClock(1000.0)
    shared = scalar_mul(toy, k, toy.g)
    a = Session(derive(shared, toy, clock), "initiator", clock)
    b = Session(derive(shared, toy, clock), "responder", clock)
    return a, b, clock


def test_derive_matches_md5_of_encoding(toy, sm2):
    for params, k in ((toy, 7), (sm2, 123456789)):
        shared = scalar_mul(params, k, params.g)
        key = derive(shared, params, ManualClock(3.0))
        assert key.key.bytes == ref_md5(encode_point(params, shared))
        assert key.established_at == 3.0 and key.epoch == 0


def test_derive_infinity(toy):
    with pytest.raises(DegenerateKey):
        derive(INFINITY, toy)


def test_round_trip_both_directions(toy):
    a, b, _ = make_pair(toy)
    for i in range(5):
        assert b.recv(a.send(f"a{i}".encode())) == f"a{i}".encode()
        assert a.recv(b.send(f"b{i}".encode()).to_bytes()) == f"b{i}".encode()


def test_record_wire_form(toy):
    a, _, _ = make_pair(toy)
    a.send(b"x")
    msg = a.send(b"hello")
    raw = msg.to_bytes()
    assert raw[:12] == bytes(4) + (1).to_bytes(8, "big")
    assert len(raw) == 12 + 5
    assert RecordMessage.from_bytes(raw) == msg
    with pytest.raises(ValueError):
        RecordMessage.from_bytes(raw[:11])


def test_replay_rejected(toy):
    a, b, _ = make_pair(toy)
    first = a.send(b"one")
    second = a.send(b"two")
    b.recv(first)
    b.recv(second)
    with pytest.raises(ReplayedSequence):
        b.recv(first)
    with pytest.raises(ReplayedSequence):
        b.recv(second)


def test_gaps_allowed_but_not_backwards(toy):
    a, b, _ = make_pair(toy)
    msgs = [a.send(bytes([i])) for i in range(4)]
    assert b.recv(msgs[2]) == b"\x02"
    with pytest.raises(ReplayedSequence):
        b.recv(msgs[1])
    assert b.recv(msgs[3]) == b"\x03"


def test_epoch_mismatch(toy):
    a, b, _ = make_pair(toy)
    msg = a.send(b"x")
    with pytest.raises(EpochMismatch):
        b.recv(RecordMessage(msg.epoch + 1, msg.seq, msg.ciphertext))


def test_nonces_unique_across_direction_epoch_seq():
    seen = set()
    for epoch in range(3):
        for seq in range(50):
            for role in Role:
                seen.add(record_nonce(epoch, seq, role))
    assert len(seen) == 3 * 50 * 2
    assert record_nonce(0, 0, Role.INITIATOR) == bytes(16)
    assert record_nonce(0, 0, Role.RESPONDER)[4] == 0x80


def test_directions_use_distinct_keystreams(toy):
    a, b, _ = make_pair(toy)
    ma, mb = a.send(bytes(16)), b.send(bytes(16))
    assert ma.seq == mb.seq == 0
    assert ma.ciphertext != mb.ciphertext


@pytest.mark.parametrize("gap,decision", [
    (0, ResumeDecision.RESUME_WITH_SAME_KEY),
    (29, ResumeDecision.RESUME_WITH_SAME_KEY),
    (30, ResumeDecision.RESUME_WITH_SAME_KEY),
    (31, ResumeDecision.REQUIRE_RENEGOTIATION),
    (599, ResumeDecision.REQUIRE_RENEGOTIATION),
    (600, ResumeDecision.REQUIRE_RENEGOTIATION),
    (601, ResumeDecision.SESSION_DESTROYED),
    (30.0001, ResumeDecision.REQUIRE_RENEGOTIATION),
    (600.0001, ResumeDecision.SESSION_DESTROYED),
])
def test_timer_boundaries(toy, gap, decision):
    a, _, clock = make_pair(toy)
    a.mark_disconnected()
    clock.advance(gap)
    assert a.attempt_resume() is decision
    assert RESUME_WINDOW == 30 and DESTROY_AFTER == 600


def test_resume_keeps_key_and_counters(toy):
    a, b, clock = make_pair(toy)
    b.recv(a.send(b"before"))
    key_before = a.key.key.bytes
    a.mark_disconnected()
    clock.advance(10)
    assert a.attempt_resume() is ResumeDecision.RESUME_WITH_SAME_KEY
    assert a.state is SessionState.ACTIVE and a.key.key.bytes == key_before
    assert b.recv(a.send(b"after")) == b"after"


def test_suspended_cannot_send(toy):
    a, _, _ = make_pair(toy)
    a.mark_disconnected()
    with pytest.raises(NotActive):
        a.send(b"x")


def test_destroyed_zeroizes(toy):
    a, _, clock = make_pair(toy)
    key_obj = a.key.key
    secret = key_obj.bytes
    a.mark_disconnected()
    clock.advance(601)
    assert a.attempt_resume() is ResumeDecision.SESSION_DESTROYED
    assert a.state is SessionState.CLOSED and a.key is None
    assert key_obj.bytes == bytes(16)
    assert secret not in pickle.dumps(a)
    with pytest.raises(NotActive):
        a.send(b"x")
    with pytest.raises(NotActive):
        _ = a.epoch


def test_install_rekey(toy):
    a, b, clock = make_pair(toy)
    old_record = a.send(b"old")
    old_secret = a.key.key.bytes
    for s in (a, b):
        s.mark_disconnected()
    clock.advance(100)
    for s in (a, b):
        assert s.attempt_resume() is ResumeDecision.REQUIRE_RENEGOTIATION
        with pytest.raises(NotActive):
            s.send(b"x")
    fresh = scalar_mul(toy, 11, toy.g)
    a.install_rekey(derive(fresh, toy, clock))
    b.install_rekey(derive(fresh, toy, clock))
    assert a.epoch == b.epoch == 1
    assert b.recv(a.send(b"new")) == b"new"
    with pytest.raises(EpochMismatch):
        b.recv(old_record)
    assert old_secret not in pickle.dumps(a)


def test_rekey_needs_renegotiating(toy):
    a, _, _ = make_pair(toy)
    with pytest.raises(BadState):
        a.install_rekey(derive(toy.g, toy))


def test_bad_state_transitions(toy):
    a, _, _ = make_pair(toy)
    with pytest.raises(BadState):
        a.attempt_resume()
    a.mark_disconnected()
    with pytest.raises(BadState):
        a.mark_disconnected()
    a.close()
    with pytest.raises(BadState):
        a.attempt_resume()


def test_close_wipes(toy):
    a, _, _ = make_pair(toy)
    key = a.key.key
    a.close()
    assert key.bytes == bytes(16)
    with pytest.raises(NotActive):
        a.recv(b"\x00" * 13)
    a.close()  # idempotent


def test_manual_clock():
    c = ManualClock(5)
    assert c() == 5
    assert c.advance(2.5) == 7.5


def test_keys_are_block_keys(toy):
    a, _, _ = make_pair(toy)
    assert isinstance(a.key.key, BlockKey)
