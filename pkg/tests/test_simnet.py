import pytest

from oracles import enumerate_affine
from pfschannel.curve import scalar_mul
from pfschannel.errors import CapabilityError, ScriptError, UnknownScenario
from pfschannel.simnet import (
    SCENARIOS,
    Action,
    Adversary,
    Cap,
    Harness,
    Simulation,
    Wire,
    discrete_log_bruteforce,
    enumerate_points,
    parse_script,
    run_scenario,
    valid_encoding_count,
)
from pfschannel.session import ManualClock


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_default_scenarios_pass(scenario):
    report = run_scenario(scenario, seed=0)
    assert report.passed, report.to_text()
    assert report.transcript_digest


@pytest.mark.parametrize("scenario", ["S1", "S2", "S4"])
def test_reports_are_deterministic(scenario):
    first = run_scenario(scenario, seed=4)
    second = run_scenario(scenario, seed=4)
    assert first.to_text() == second.to_text()
    assert first.transcript_digest != run_scenario(scenario, seed=5).transcript_digest


def test_s4_headline():
    assert run_scenario("S4").headline == "PASS (gap demonstrated: record layer malleable)"
    assert run_scenario("S1").headline == "PASS"


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        run_scenario("S9")


class TestScript:
    def test_parse(self):
        actions = parse_script("deliver\ndeliver 3  # two more\ndeliver all\ndrop 2\n"
                               "flip 1 13 7\ninject 0a0b b2a\nreveal_ltk at 50\n\n")
        assert actions == [
            Action("deliver", (1,)), Action("deliver", (3,)), Action("deliver", ("all",)),
            Action("drop", (2,)), Action("flip", (1, 13, 7)),
            Action("inject", (b"\x0a\x0b", "b2a")), Action("reveal_ltk", (50.0,)),
        ]

    @pytest.mark.parametrize("text", [
        "teleport 1", "deliver 0", "deliver x", "drop", "flip 1 2", "inject zz",
        "inject 00 sideways", "reveal_ltk 5", "deliver 1 2",
    ])
    def test_malformed(self, text):
        with pytest.raises(ScriptError):
            parse_script(text)

    def test_capability_gate(self):
        with pytest.raises(ScriptError):
            run_scenario("S1", script="deliver 1\ndrop 1")

    def test_over_delivery(self):
        with pytest.raises(ScriptError):
            run_scenario("S1", script="deliver 50")

    def test_flip_handshake_frame_breaks_s4(self):
        report = run_scenario("S4", script="flip 0 30 0\ndeliver all")
        assert not report.passed

    def test_flip_other_record(self):
        # frames 0,1 are handshakes, then alice's and bob's records
        report = run_scenario("S4", script="deliver 2\nflip 3 20 5\ndeliver all")
        assert report.passed, report.to_text()

    def test_flip_header_is_not_malleability(self):
        report = run_scenario("S4", script="deliver 2\nflip 2 4 0\ndeliver all")
        assert not report.outcomes["plaintext_bit_flipped_exactly"]

    def test_dropped_share_means_no_session(self):
        report = run_scenario("S3", script="drop 0\ndeliver all")
        assert not report.passed


class TestWire:
    def test_log_and_digest(self):
        w = Wire()
        w.post("a2b", "handshake", b"abc")
        w.post("b2a", "handshake", b"def")
        d0 = w.digest()
        w.flip(1, 0, 0)
        assert w.digest() != d0
        assert w.take_next().data == b"abc"
        assert w.take_next().data == b"eef"
        assert w.take_next() is None

    def test_drop(self):
        w = Wire()
        w.post("a2b", "handshake", b"abc")
        w.drop(0)
        assert w.take_next() is None
        with pytest.raises(ScriptError):
            w.drop(0)


def test_harness_withholds_ltk():
    h = Harness("psk", ManualClock(0))
    with pytest.raises(CapabilityError):
        h.ltk_for(Adversary({Cap.OBSERVE}))
    late = Adversary({Cap.OBSERVE}, reveal_at=10)
    with pytest.raises(CapabilityError):
        h.ltk_for(late)
    h.clock.advance(10)
    assert h.ltk_for(late) == "psk"
    assert h.ltk_for(Adversary({Cap.KNOWS_LTK})) == "psk"
    assert [line.split(": ")[1] for line in h.audit] == ["denied", "denied", "granted", "granted"]


def test_s2_ltk_reveal_before_close_fails():
    # reveal while the session is still live: forward secrecy claim no longer applies
    report = run_scenario("S2", script="reveal_ltk at 0\ndeliver all")
    assert not report.outcomes["ltk_withheld_before_reveal"]


def test_s2_on_sm2_skips_bruteforce(sm2):
    report = run_scenario("S2", params=sm2)
    assert report.passed, report.to_text()
    assert "dlp_visited" not in report.metrics
    assert report.metrics["dlp_search_space_bits"] == 256


def test_enumeration_oracles(toy):
    pts = enumerate_points(toy)
    assert {(p.x, p.y) for p in pts} == set(enumerate_affine(toy.p, toy.a, toy.b))
    assert len(pts) + 1 == toy.n * toy.h
    assert valid_encoding_count(toy) == len(pts)


def test_discrete_log(toy):
    for k in (1, 2, 50, toy.n - 1):
        assert discrete_log_bruteforce(toy, scalar_mul(toy, k, toy.g)) == (k, k)


def test_simulation_endpoints_present(toy):
    sim = Simulation(toy, 0, Adversary(), present=("bob",))
    assert "alice" not in sim.endpoints and sim.bob.name == "bob"
