"""Protocol engine: Bob's qudits in, Alice's strategy, channel transport, Bob's verification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from qtransmit.core.errors import (
    ArgumentError,
    CausalityError,
    ConfigError,
    SchedulingError,
)
from qtransmit.core.logs import get_logger
from qtransmit.core.rng import child_rng
from qtransmit.models.protocol import (
    AdversaryView,
    ChannelKind,
    LegConfig,
    Lifecycle,
    Measurement,
    Message,
    ProtocolConfig,
    StrategyInput,
    TestTally,
    ThresholdConvention,
    TranscriptRecord,
    Verdict,
    VerifyMode,
)
from qtransmit.models.quantum import DensityMatrix, PureState, WeylIndex
from qtransmit.models.spacetime import Event
from qtransmit.services import channels
from qtransmit.services import qudit_core as qc
from qtransmit.services.adversary import Strategy
from qtransmit.services.simulation import EventQueue
from qtransmit.services.spacetime import causal_reachable, validate_geometry
from qtransmit.services.stats import azuma_tail

LOG = get_logger("protocol")

# Bob's own classical links (B2 relay) are ideal secure channels at light speed
BOB_CLASSICAL = LegConfig(channel=ChannelKind.CLASSICAL_SECURE)


# ---------- bounds and thresholds


def cloning_bound(d: int, n_branches: int = 2, constant: Optional[float] = None) -> float:
    """Upper bound on the summed per-qudit pass probabilities over all sites."""
    if d < 2:
        raise ArgumentError(f"d must be >= 2, got {d}")
    if n_branches == 2:
        return 1.0 + 2.0 / (d + 1)
    if constant is None:
        raise ArgumentError(f"no bound constant configured for {n_branches} sites")
    return constant


def azuma_bound(n: int, d: int, eps: float) -> float:
    """Excess of P1 + P2 over 1 allowed for the redundant protocol."""
    return azuma_tail(n, eps, 1.0 + 2.0 / (d + 1))


def loss_tolerance(d: int) -> float:
    if d < 2:
        raise ArgumentError(f"d must be >= 2, got {d}")
    return 0.5 - 1.0 / (d + 1)


def acceptance_threshold(n_tests: int, config: ProtocolConfig) -> float:
    d, eps = config.d, config.epsilon
    conv = config.threshold_convention
    if conv == ThresholdConvention.TOLERANCE:
        return (1.0 - config.tolerated_loss) * n_tests
    if conv == ThresholdConvention.BODY:
        return 0.5 * n_tests * (1.0 + 1.0 / (d + 1) + eps)
    n = config.n_branches
    return n_tests / n * (cloning_bound(d, n, config.multi_site_bound) + eps)


def _clears(passes: int, threshold: float, conv: ThresholdConvention) -> bool:
    if conv == ThresholdConvention.BODY:
        return passes > threshold + 1e-9
    return passes >= threshold - 1e-9


def redundant_verdict(tally: TestTally, config: ProtocolConfig) -> List[Verdict]:
    """Per-site verdicts; in B3 mode sites with too few matched rounds are inconclusive."""
    conv = config.threshold_convention
    passes = tally.passes
    if config.verify_mode == VerifyMode.B3:
        matched = tally.matched_counts or [0] * len(passes)
        floor = 2.0 * config.m / 3.0
        out = []
        for n_i, m_i in zip(passes, matched):
            if m_i < floor:
                out.append(Verdict.INCONCLUSIVE)
            else:
                ok = _clears(n_i, acceptance_threshold(m_i, config), conv)
                out.append(Verdict.ACCEPT if ok else Verdict.REJECT)
        return out
    threshold = acceptance_threshold(tally.n, config)
    return [Verdict.ACCEPT if _clears(n_i, threshold, conv) else Verdict.REJECT for n_i in passes]


# ---------- engine


@dataclass
class _Slot:
    round: int
    branch: int
    psi: PureState
    handle: str
    real: bool
    state: Optional[DensityMatrix] = None
    arrived: bool = False
    index: Optional[WeylIndex] = None
    datum_in: bool = False
    stored_at: Optional[Event] = None
    guess: Optional[WeylIndex] = None
    guess_passed: bool = False
    matched: bool = False
    pending_route: Optional[tuple] = None
    result: Optional[bool] = None


class ProtocolRun:
    """One run of the transmission-and-verification protocol."""

    def __init__(self, config: ProtocolConfig, strategy: Strategy, rng: np.random.Generator):
        self.config = config
        self.strategy = strategy
        self.rng = rng
        self.d = config.d
        self.geometry = config.geometry
        self.mode = config.verify_mode
        self.kind = config.quantum_leg.channel
        self.queue = EventQueue(self.geometry.tau_geo)
        self.slots: Dict[tuple, _Slot] = {}
        self.record = TranscriptRecord(
            strategy=strategy.name,
            verify_mode=self.mode,
            d=self.d,
            commit_event=self.geometry.p,
        )

    # -- geometry helpers

    def _at(self, event: Event, k: int) -> Event:
        if self.config.round_spacing == 0.0:
            return event
        return Event.model_construct(t=event.t + k * self.config.round_spacing, x=event.x)

    def _p(self, k: int) -> Event:
        return self._at(self.geometry.p, k)

    def _p_prime(self, j: int, k: int) -> Event:
        return self._at(self.geometry.branches[j].p_prime, k)

    def _q(self, j: int, k: int) -> Event:
        return self._at(self.geometry.branches[j].q, k)

    @property
    def _needs_index(self) -> bool:
        return not (self.mode == VerifyMode.DIRECT and self.kind == ChannelKind.PHYSICALLY_SECURE)

    # -- preconditions

    def _preflight(self) -> None:
        report = validate_geometry(self.geometry)
        if not report.ok:
            raise ConfigError("geometry is not admissible", report.lines())
        if self.mode == VerifyMode.B1:
            leg = self.config.bob_leg
            for j, br in enumerate(self.geometry.branches):
                if not causal_reachable(br.p_prime, br.q, leg.speed_limit, self.geometry.tau_geo):
                    raise SchedulingError(
                        f"Bob cannot carry the returned state from P'{j + 1} to Q{j + 1} "
                        f"at speed {leg.speed_limit}"
                    )

    # -- bookkeeping

    def _life(self, op: str, at: Event, parents=(), children=()) -> None:
        self.record.lifecycle.append(Lifecycle(op=op, at=at, parents=tuple(parents), children=tuple(children)))

    def _measure(self, slot: _Slot, at: Event, outcome: bool, stage: str = "verify",
                 guess: Optional[int] = None) -> None:
        self.record.measurements.append(Measurement(
            site=slot.branch, round=slot.round, at=at, handle=slot.handle,
            guess=guess, outcome=outcome, stage=stage,
        ))
        self._life("measure", at, parents=(slot.handle,))

    def _post(self, msg: Message) -> None:
        self.queue.post(msg)

    # -- sending

    def _send_datum(self, slot: _Slot, idx: WeylIndex, src: Event, route) -> None:
        leg = self.config.classical_leg
        k, j = slot.round, slot.branch
        if route is not None:
            emit, deliver = route
        else:
            emit, deliver = src, channels.arrival(src, self._q(j, k), leg)
        self._post(channels.stamp(
            "datum", leg.channel, emit, deliver, speed_limit=leg.speed_limit,
            round=k, branch=j, payload=idx, handle=slot.handle, unveil=True,
        ))
        if self.config.broadcast_classical:
            self._broadcast(slot, idx, emit)

    def _broadcast(self, slot: _Slot, idx: WeylIndex, emit: Event) -> None:
        """Copies of the datum plus a real/dummy flag to every site."""
        leg = self.config.classical_leg
        for other in range(self.geometry.n_branches):
            deliver = channels.arrival(emit, self._q(other, slot.round), leg)
            if other != slot.branch:
                self._post(channels.stamp(
                    "datum-copy", leg.channel, emit, deliver, speed_limit=leg.speed_limit,
                    round=slot.round, branch=slot.branch, payload=idx,
                ))
            if self.kind == ChannelKind.RANDOMIZED_TRANSMISSION and other == slot.branch:
                flag_deliver = channels.arrival(emit, self._q(other, slot.round), BOB_CLASSICAL)
                self._post(channels.stamp(
                    "flag", ChannelKind.CLASSICAL_SECURE, emit, flag_deliver,
                    round=slot.round, branch=slot.branch,
                    payload="real" if slot.real else "dummy", visible=False,
                ))

    def _dispatch_round(self, k: int, psi: PureState, action) -> None:
        p_k = self._p(k)
        leg = self.config.quantum_leg
        for j, out in enumerate(action.outputs):
            slot = _Slot(round=k, branch=j, psi=psi, handle=f"q{k}.{j}", real=out.real)
            self.slots[(k, j)] = slot
            if out.state is None:
                slot.arrived = True
                slot.datum_in = True
                slot.result = False
                continue
            dest = self._q(j, k) if self.mode == VerifyMode.DIRECT else self._p_prime(j, k)
            deliver = channels.arrival(p_k, dest, leg)

            if self.kind == ChannelKind.PHYSICALLY_SECURE:
                msg = channels.send_s1(
                    out.state, p_k, deliver, leg=leg, rng=self.rng, round=k, branch=j,
                    handle=slot.handle, region=self.config.alice_labs,
                )
                msg.unveil = self.mode == VerifyMode.DIRECT
                # extended mode: the datum leaves P'_j once Alice randomizes there
                slot.pending_route = out.classical_route
                self._post(msg)
            elif self.kind == ChannelKind.TELEPORT_PREDISTRIBUTED:
                resource = channels.TeleportResource(self.d, handle=f"bell{k}.{j}")
                self._life("create", p_k, children=(resource.handle,))
                datum, received = channels.send_s2_teleport(
                    out.state, resource, p_k, deliver, classical_leg=self.config.classical_leg,
                    rng=self.rng, datum_dst=channels.arrival(p_k, self._q(j, k), self.config.classical_leg),
                    round=k, branch=j, handle=slot.handle,
                )
                self._life("teleport", p_k, parents=(resource.handle,))
                arrived = channels.apply_loss(received, leg.loss, self.rng)
                self._post(channels.stamp(
                    "qudit", ChannelKind.TELEPORT_PREDISTRIBUTED, p_k, deliver,
                    speed_limit=leg.speed_limit, round=k, branch=j, payload=arrived,
                    handle=slot.handle, visible=False, lost=arrived is None,
                ))
                self._post_datum_message(slot, datum, out.classical_route)
            else:
                quantum, datum = channels.send_s3_randomized(
                    out.state, p_k, deliver, quantum_leg=leg, rng=self.rng,
                    datum_dst=channels.arrival(p_k, self._q(j, k), self.config.classical_leg),
                    round=k, branch=j, handle=slot.handle,
                )
                self._post(quantum)
                self._post_datum_message(slot, datum, out.classical_route)

    def _post_datum_message(self, slot: _Slot, datum: Message, route) -> None:
        if route is not None:
            datum.emit, datum.deliver = route
        self._post(datum)
        if self.config.broadcast_classical:
            self._broadcast(slot, datum.payload, datum.emit)

    # -- delivery handlers

    def _on_delivery(self, msg: Message) -> None:
        if msg.purpose in ("datum-copy", "flag"):
            return
        slot = self.slots[(msg.round, msg.branch)]
        if msg.purpose == "qudit":
            self._on_qudit(slot, msg)
        elif msg.purpose == "datum":
            self._on_datum(slot, msg)
        elif msg.purpose == "carry":
            slot.state, slot.arrived = msg.payload, True
            self._try_verify(slot, msg.deliver)
        elif msg.purpose == "relay":
            self._on_relay(slot, msg)

    def _on_qudit(self, slot: _Slot, msg: Message) -> None:
        state: Optional[DensityMatrix] = msg.payload
        if self.kind == ChannelKind.PHYSICALLY_SECURE and self.mode != VerifyMode.DIRECT:
            idx, scrambled = channels.randomize(state or DensityMatrix.maximally_mixed(self.d), self.rng)
            state = scrambled if state is not None else None
            self._send_datum(slot, idx, msg.deliver, slot.pending_route)

        if self.mode == VerifyMode.DIRECT:
            slot.state, slot.arrived = state, True
            self._try_verify(slot, msg.deliver)
        elif self.mode == VerifyMode.B1:
            leg = self.config.bob_leg
            target = channels.arrival(msg.deliver, self._q(slot.branch, slot.round), leg)
            if state is None:
                carried = channels.stamp(
                    "carry", leg.channel, msg.deliver, target, speed_limit=leg.speed_limit,
                    round=slot.round, branch=slot.branch, handle=slot.handle, visible=False, lost=True,
                )
            else:
                carried = channels.send_s1(
                    state, msg.deliver, target, leg=leg, rng=self.rng, round=slot.round,
                    branch=slot.branch, handle=slot.handle, purpose="carry",
                )
            self._post(carried)
        elif self.mode == VerifyMode.B2:
            slot.state, slot.arrived, slot.stored_at = state, True, msg.deliver
        else:
            guess = qc.random_weyl_index(self.d, self.rng)
            slot.guess = guess
            passed = False
            if state is not None:
                expected = qc.apply_unitary_pure(slot.psi, qc.weyl_unitary(self.d, guess))
                passed = qc.projective_test(state, expected, self.rng)
            slot.guess_passed = passed
            slot.arrived = True
            self._measure(slot, msg.deliver, passed, stage="guess", guess=guess.flat)

    def _on_datum(self, slot: _Slot, msg: Message) -> None:
        slot.index, slot.datum_in = msg.payload, True
        if self.mode in (VerifyMode.DIRECT, VerifyMode.B1):
            self._try_verify(slot, msg.deliver)
        elif self.mode == VerifyMode.B2:
            back = channels.arrival(msg.deliver, self._p_prime(slot.branch, slot.round), BOB_CLASSICAL)
            self._post(channels.stamp(
                "relay", ChannelKind.CLASSICAL_SECURE, msg.deliver, back,
                round=slot.round, branch=slot.branch, payload=msg.payload, handle=slot.handle,
            ))
        else:
            matched = slot.guess is not None and slot.guess.flat == msg.payload.flat
            slot.result = matched and slot.guess_passed
            slot.matched = matched

    def _on_relay(self, slot: _Slot, msg: Message) -> None:
        lifetime = self.config.storage_lifetime
        if slot.stored_at is not None and lifetime is not None and msg.deliver.t - slot.stored_at.t > lifetime:
            LOG.debug("[protocol] round %d branch %d: storage exceeded %.3g", slot.round, slot.branch, lifetime)
            slot.state = None
        self._try_verify(slot, msg.deliver)

    def _try_verify(self, slot: _Slot, at: Event) -> None:
        if slot.result is not None or not slot.arrived:
            return
        if self._needs_index and not slot.datum_in:
            return
        if slot.state is None:
            slot.result = False
            self._measure(slot, at, False)
            return
        rho = slot.state
        if self._needs_index:
            rho = channels.derandomize(rho, slot.index)
        slot.result = qc.projective_test(rho, slot.psi, self.rng)
        self._measure(slot, at, slot.result)

    # -- driver

    def _tally(self, n: int) -> TestTally:
        nb = self.geometry.n_branches
        indicators = [[int(bool(self.slots[(k, j)].result)) if (k, j) in self.slots else 0 for k in range(n)]
                      for j in range(nb)]
        matched = None
        if self.mode == VerifyMode.B3:
            matched = [[int(self.slots[(k, j)].matched) if (k, j) in self.slots else 0 for k in range(n)]
                       for j in range(nb)]
        tally = TestTally(d=self.d, n=n, indicators=indicators, matched=matched)
        if self.mode == VerifyMode.B3:
            tally.thresholds = [acceptance_threshold(m, self.config) for m in tally.matched_counts]
        else:
            tally.thresholds = [acceptance_threshold(n, self.config)] * nb
        tally.verdicts = redundant_verdict(tally, self.config)
        return tally

    def _token_returnable(self, tally: TestTally) -> bool:
        j = self.strategy.branch_choice
        legs = (self.config.quantum_leg, self.config.bob_leg)
        return (
            self.mode in (VerifyMode.B1, VerifyMode.B2)
            and j is not None
            and all(leg.loss.is_ideal for leg in legs)
            and all(tally.indicators[j])
        )

    def execute(self) -> TranscriptRecord:
        cfg = self.config
        self._preflight()
        n, nb = cfg.n, self.geometry.n_branches
        states = [qc.haar_state(self.d, self.rng) for _ in range(n)]
        labs = cfg.alice_labs
        for k in range(n):
            h = f"psi{k}"
            p_k = self._p(k)
            self._life("create", p_k, children=(h,))
            # Bob hands the input over as a quantum system: never readable in transit
            self.record.strategy_inputs.append(StrategyInput(
                handle=h, round=k, visible_to_adversary=False,
                alice_region=labs is None or labs.covers(p_k.x, self.geometry.tau_geo),
            ))

        self.strategy.begin(n, nb, child_rng(self.rng))
        self.record.branch_choice = self.strategy.branch_choice
        actions = self.strategy.act(states)
        if len(actions) != n or any(len(a.outputs) != nb for a in actions):
            raise ArgumentError(f"strategy {self.strategy.name} returned a malformed action list")

        try:
            for k, (psi, action) in enumerate(zip(states, actions)):
                p_k = self._p(k)
                real = [f"q{k}.{j}" for j, o in enumerate(action.outputs) if o.state is not None and o.real]
                self._life(action.op, p_k, parents=(f"psi{k}",), children=real)
                for j, o in enumerate(action.outputs):
                    if o.state is not None and not o.real:
                        self._life("create", p_k, children=(f"q{k}.{j}",))
                self._dispatch_round(k, psi, action)
            self.queue.run(self._on_delivery)
        except CausalityError as e:
            LOG.error("[protocol] run aborted: %s", e)
            self.record.aborted = str(e)
            self.record.messages = list(self.queue.delivered) + self.queue.pending() + self.queue.rejected
            tally = TestTally(d=self.d, n=n, indicators=[[0] * n for _ in range(nb)],
                              thresholds=[acceptance_threshold(n, cfg)] * nb,
                              verdicts=[Verdict.REJECT] * nb)
            self.record.tally = tally
            return self.record

        self.record.messages = list(self.queue.delivered)
        tally = self._tally(n)
        self.record.tally = tally
        self.record.token_returnable = self._token_returnable(tally)
        LOG.debug("[protocol] %s run: passes=%s verdicts=%s", self.strategy.name, tally.passes,
                  [v.value for v in tally.verdicts])
        return self.record


def run_protocol(config: ProtocolConfig, strategy: Strategy, rng: np.random.Generator) -> TranscriptRecord:
    return ProtocolRun(config, strategy, rng).execute()


def run_direct(config: ProtocolConfig, strategy: Strategy, rng: np.random.Generator) -> TranscriptRecord:
    if config.verify_mode != VerifyMode.DIRECT:
        raise ArgumentError(f"run_direct needs verify_mode=direct, got {config.verify_mode.value}")
    return run_protocol(config, strategy, rng)


def run_extended(config: ProtocolConfig, strategy: Strategy, rng: np.random.Generator) -> TranscriptRecord:
    if config.verify_mode not in (VerifyMode.B1, VerifyMode.B2):
        raise ArgumentError(f"run_extended needs verify_mode B1 or B2, got {config.verify_mode.value}")
    return run_protocol(config, strategy, rng)


def run_b3(config: ProtocolConfig, strategy: Strategy, rng: np.random.Generator) -> TranscriptRecord:
    if config.verify_mode != VerifyMode.B3:
        raise ArgumentError(f"run_b3 needs verify_mode=B3, got {config.verify_mode.value}")
    return run_protocol(config, strategy, rng)


# ---------- hiding


def adversary_view(record: TranscriptRecord, rng: np.random.Generator) -> AdversaryView:
    """Bob's observations of traffic emitted before the first unveil delivery.

    Visible qudits are read out in the computational basis; visible classical
    data is read in full; everything else contributes timing only.
    """
    unveils = [m.deliver.t for m in record.messages if m.unveil and not m.violation]
    cutoff = min(unveils) if unveils else math.inf
    obs = []
    for m in sorted(record.messages, key=lambda m: (m.emit.t, m.seq)):
        if m.emit.t >= cutoff:
            continue
        content: Optional[int] = None
        if m.visible_to_adversary:
            if isinstance(m.payload, DensityMatrix):
                probs = np.clip(np.real(np.diag(m.payload.mat)), 0.0, None)
                content = int(rng.choice(m.payload.dim, p=probs / probs.sum()))
            elif isinstance(m.payload, WeylIndex):
                content = m.payload.flat
            elif m.lost:
                content = -1
        obs.append((m.purpose, m.branch, m.round, float(m.emit.t), float(m.deliver.t), content))
    return AdversaryView(cutoff=cutoff if math.isfinite(cutoff) else -1.0, observations=obs)
