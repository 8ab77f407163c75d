"""Tests for S1/S2/S3 transport, loss models and the event queue."""

import numpy as np
import pytest

from qtransmit.core.errors import ArgumentError, CausalityError, GeometryError, StateError
from qtransmit.core.rng import make_rng
from qtransmit.models.protocol import ChannelKind, LegConfig, LossModel
from qtransmit.models.quantum import DensityMatrix, PureState
from qtransmit.models.spacetime import Event, Lab, SecureRegion
from qtransmit.services import channels
from qtransmit.services import qudit_core as qc
from qtransmit.services.simulation import EventQueue

S1 = LegConfig(channel=ChannelKind.PHYSICALLY_SECURE)
SECURE = LegConfig(channel=ChannelKind.CLASSICAL_SECURE)
ORIGIN = Event(t=0.0, x=0.0)
P_PRIME = Event(t=1.0, x=1.0)


def test_arrival_is_the_target_when_reachable():
    assert channels.arrival(ORIGIN, P_PRIME, S1) is P_PRIME


def test_arrival_is_delayed_by_slow_legs():
    slow = LegConfig(channel=ChannelKind.PHYSICALLY_SECURE, speed_limit=0.5, latency=0.25)
    out = channels.arrival(ORIGIN, P_PRIME, slow)
    assert out.t == pytest.approx(2.25)
    assert out.x == P_PRIME.x


def test_s1_ideal_transport_is_exact_and_hidden():
    rng = make_rng(0)
    psi = qc.haar_state(3, rng)
    msg = channels.send_s1(psi, ORIGIN, P_PRIME, leg=S1, rng=rng, round=4, branch=1)
    assert msg.visible_to_adversary is False
    assert msg.lost is False
    assert qc.fidelity(msg.payload, psi) == pytest.approx(1.0)
    assert len(msg.payload_digest) == 16
    assert (msg.round, msg.branch) == (4, 1)


def test_s1_rejects_superluminal_delivery():
    with pytest.raises(CausalityError):
        channels.send_s1(PureState.basis(2, 0), ORIGIN, Event(t=0.5, x=1.0), leg=S1, rng=make_rng(0))


def test_s1_path_must_stay_in_the_labs():
    region = SecureRegion(labs=[Lab(lo=(-0.5,), hi=(0.5,))])
    with pytest.raises(GeometryError):
        channels.send_s1(PureState.basis(2, 0), ORIGIN, P_PRIME, leg=S1, rng=make_rng(0), region=region)
    wide = SecureRegion(labs=[Lab(lo=(-0.5,), hi=(0.5,)), Lab(lo=(0.5,), hi=(2.0,))])
    msg = channels.send_s1(PureState.basis(2, 0), ORIGIN, P_PRIME, leg=S1, rng=make_rng(0), region=wide)
    assert not msg.lost


def test_loss_and_depolarization_rates():
    rng = make_rng(1)
    psi = PureState.basis(2, 0)
    model = LossModel(loss_prob=0.3, depolarize_prob=0.5)
    outs = [channels.apply_loss(psi, model, rng) for _ in range(4000)]
    lost = sum(o is None for o in outs)
    mixed = sum(o is not None and qc.fidelity(o, psi) == pytest.approx(0.5) for o in outs)
    assert lost / 4000 == pytest.approx(0.3, abs=0.03)
    assert mixed / (4000 - lost) == pytest.approx(0.5, abs=0.04)


def test_ideal_loss_model_is_identity():
    rho = DensityMatrix.maximally_mixed(3)
    assert channels.apply_loss(rho, LossModel(), make_rng(0)) is rho


def test_randomize_then_derandomize_round_trip():
    rng = make_rng(2)
    rho = qc.haar_state(4, rng).projector()
    idx, scrambled = channels.randomize(rho, rng)
    back = channels.derandomize(scrambled, idx)
    assert qc.trace_distance(back, rho) < 1e-12


def test_teleport_resource_is_single_use():
    res = channels.TeleportResource(2, "bell0")
    res.consume()
    assert res.consumed
    with pytest.raises(StateError):
        res.consume()


def test_teleport_without_resource_fails():
    with pytest.raises(StateError):
        channels.teleport(PureState.basis(2, 0), None, make_rng(0))


def test_teleport_dimension_mismatch():
    with pytest.raises(ArgumentError):
        channels.teleport(PureState.basis(3, 0), channels.TeleportResource(2), make_rng(0))


@pytest.mark.parametrize("d", [2, 3])
def test_s2_teleport_recovers_pure_and_mixed_inputs(d):
    rng = make_rng(10 + d)
    psi = qc.haar_state(d, rng)
    msg, received = channels.send_s2_teleport(
        psi, channels.TeleportResource(d), ORIGIN, P_PRIME, classical_leg=SECURE, rng=rng,
    )
    assert msg.purpose == "datum"
    assert msg.unveil
    assert msg.visible_to_adversary is False
    assert qc.fidelity(channels.derandomize(received, msg.payload), psi) == pytest.approx(1.0, abs=1e-10)

    rho = DensityMatrix.maximally_mixed(d)
    msg, received = channels.send_s2_teleport(
        rho, channels.TeleportResource(d), ORIGIN, P_PRIME, classical_leg=SECURE, rng=rng,
    )
    assert qc.trace_distance(channels.derandomize(received, msg.payload), rho) < 1e-12


def test_s2_needs_a_classical_leg():
    with pytest.raises(ArgumentError):
        channels.send_s2_teleport(PureState.basis(2, 0), channels.TeleportResource(2), ORIGIN, P_PRIME,
                                  classical_leg=S1, rng=make_rng(0))


def test_s2_public_datum_is_visible():
    public = LegConfig(channel=ChannelKind.CLASSICAL_PUBLIC)
    msg, _ = channels.send_s2_teleport(PureState.basis(2, 0), channels.TeleportResource(2), ORIGIN, P_PRIME,
                                       classical_leg=public, rng=make_rng(0))
    assert msg.visible_to_adversary is True


def test_s3_visible_qudit_is_maximally_mixed_on_average():
    rng = make_rng(3)
    d = 2
    psi = qc.haar_state(d, rng)
    q_leg = LegConfig(channel=ChannelKind.RANDOMIZED_TRANSMISSION)
    total = np.zeros((d, d), dtype=complex)
    runs = 4000
    for _ in range(runs):
        quantum, classical = channels.send_s3_randomized(psi, ORIGIN, P_PRIME, quantum_leg=q_leg, rng=rng)
        assert quantum.visible_to_adversary and not classical.visible_to_adversary
        total += quantum.payload.mat
    assert np.allclose(total / runs, np.eye(d) / d, atol=0.04)


def test_s3_derandomizes_with_the_secure_datum():
    rng = make_rng(4)
    psi = qc.haar_state(3, rng)
    q_leg = LegConfig(channel=ChannelKind.RANDOMIZED_TRANSMISSION)
    quantum, classical = channels.send_s3_randomized(psi, ORIGIN, P_PRIME, quantum_leg=q_leg, rng=rng)
    assert classical.channel == ChannelKind.CLASSICAL_SECURE
    assert qc.fidelity(channels.derandomize(quantum.payload, classical.payload), psi) == pytest.approx(1.0)


def _msg(emit, deliver, purpose="qudit"):
    return channels.stamp(purpose, ChannelKind.PHYSICALLY_SECURE, emit, deliver, round=0, branch=0)


def test_event_queue_delivers_in_time_order():
    q = EventQueue()
    q.post(_msg(ORIGIN, Event(t=3.0, x=0.0), "late"))
    q.post(_msg(ORIGIN, Event(t=1.0, x=0.0), "early"))
    q.post(_msg(ORIGIN, Event(t=1.0, x=0.5), "tie"))
    order = [m.purpose for m in q.drain()]
    assert order == ["early", "tie", "late"]
    assert q.now == 3.0
    assert len(q.delivered) == 3


def test_event_queue_handlers_can_post_follow_ups():
    q = EventQueue()
    q.post(_msg(ORIGIN, P_PRIME, "first"))
    seen = []

    def handler(msg):
        seen.append(msg.purpose)
        if msg.purpose == "first":
            q.post(_msg(msg.deliver, Event(t=2.0, x=0.0), "second"))

    assert q.run(handler) == 2
    assert seen == ["first", "second"]


def test_event_queue_rejects_acausal_messages():
    q = EventQueue()
    bad = _msg(ORIGIN, Event(t=0.5, x=3.0))
    with pytest.raises(CausalityError):
        q.post(bad)
    assert bad.violation
    assert q.rejected == [bad]
    assert len(q) == 0
