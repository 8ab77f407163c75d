"""Secure transmission channels S1/S2/S3 and the classical one-time-pad channel."""

from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np

from qtransmit.core.config import get_settings
from qtransmit.core.errors import ArgumentError, CausalityError, GeometryError, StateError
from qtransmit.core.logs import get_logger
from qtransmit.models.protocol import ChannelKind, LegConfig, LossModel, Message
from qtransmit.models.quantum import BipartiteState, DensityMatrix, PureState, WeylIndex
from qtransmit.models.spacetime import Event, SecureRegion
from qtransmit.services import qudit_core as qc
from qtransmit.services.spacetime import causal_reachable
from qtransmit.services.transcript import payload_digest

LOG = get_logger("channels")

StateLike = Union[PureState, DensityMatrix]

# path sample count for the secure-region check
_PATH_SAMPLES = 33


def _as_density(state: StateLike) -> DensityMatrix:
    if isinstance(state, PureState):
        return state.projector()
    return state


def arrival(src: Event, dst: Event, leg: LegConfig) -> Event:
    """Delivery event at dst's location: dst itself, or later if the leg is slow."""
    dx = float(np.linalg.norm(np.subtract(dst.x, src.x)))
    earliest = src.t + leg.latency + dx / leg.speed_limit
    if earliest <= dst.t:
        return dst
    return Event.model_construct(t=earliest, x=dst.x)


def check_causal(emit: Event, deliver: Event, speed_limit: float, tau_geo: Optional[float] = None) -> None:
    if not causal_reachable(emit, deliver, speed_limit, tau_geo):
        raise CausalityError(
            f"delivery at t={deliver.t:.6g}, x={deliver.x} is outside the cone of "
            f"emission at t={emit.t:.6g}, x={emit.x} for speed {speed_limit}"
        )


def check_secure_path(src: Event, dst: Event, region: Optional[SecureRegion]) -> None:
    """Straight-line path must stay inside the sender's labs; None means unrestricted."""
    if region is None:
        return
    tau = get_settings().tau_geo
    a, b = np.asarray(src.x), np.asarray(dst.x)
    for s in np.linspace(0.0, 1.0, _PATH_SAMPLES):
        point = tuple(a + s * (b - a))
        if not region.covers(point, tau):
            raise GeometryError(f"secure path from {src.x} to {dst.x} leaves the lab region at {point}")


def stamp(
    purpose: str,
    channel: ChannelKind,
    emit: Event,
    deliver: Event,
    *,
    speed_limit: float = 1.0,
    round: int,
    branch: int,
    payload=None,
    handle: Optional[str] = None,
    visible: Optional[bool] = None,
    lost: bool = False,
    unveil: bool = False,
) -> Message:
    """Build a message record without checking causality (the event queue does that)."""
    return Message.model_construct(
        seq=-1,
        purpose=purpose,
        channel=channel,
        emit=emit,
        deliver=deliver,
        speed_limit=speed_limit,
        visible_to_adversary=channel.content_visible if visible is None else visible,
        round=round,
        branch=branch,
        handle=handle,
        lost=lost,
        payload=payload,
        payload_digest=payload_digest(payload),
        unveil=unveil,
        violation=False,
    )


# ---------- noise


def apply_loss(state: StateLike, model: LossModel, rng: np.random.Generator) -> Optional[DensityMatrix]:
    """None with probability loss_prob, else I/d with probability depolarize_prob, else unchanged."""
    rho = _as_density(state)
    if model.is_ideal:
        return rho
    if rng.random() < model.loss_prob:
        return None
    if model.depolarize_prob > 0.0 and rng.random() < model.depolarize_prob:
        return qc.depolarize(rho)
    return rho


def randomize(rho: DensityMatrix, rng: np.random.Generator) -> Tuple[WeylIndex, DensityMatrix]:
    """Apply a uniformly random Weyl operator; returns (index, U_i rho U_i^dagger)."""
    idx = qc.random_weyl_index(rho.dim, rng)
    return idx, qc.apply_unitary(rho, qc.weyl_unitary(rho.dim, idx))


def derandomize(rho: DensityMatrix, idx: WeylIndex) -> DensityMatrix:
    return qc.apply_unitary(rho, qc.correction_unitary(idx))


# ---------- S1


def send_s1(
    state: StateLike,
    src: Event,
    dst: Event,
    *,
    leg: LegConfig,
    rng: np.random.Generator,
    round: int = 0,
    branch: int = 0,
    handle: Optional[str] = None,
    region: Optional[SecureRegion] = None,
    purpose: str = "qudit",
) -> Message:
    """Physically secure transport; content is never visible in flight."""
    check_secure_path(src, dst, region)
    check_causal(src, dst, leg.speed_limit)
    out = apply_loss(state, leg.loss, rng)
    return stamp(
        purpose, ChannelKind.PHYSICALLY_SECURE, src, dst,
        speed_limit=leg.speed_limit, round=round, branch=branch,
        payload=out, handle=handle, visible=False, lost=out is None,
    )


# ---------- S2


class TeleportResource:
    """A predistributed maximally entangled pair; usable exactly once."""

    def __init__(self, d: int, handle: str = "bell"):
        self.d = d
        self.handle = handle
        self._state: Optional[BipartiteState] = qc.bell_state(d)

    @property
    def consumed(self) -> bool:
        return self._state is None

    def consume(self) -> BipartiteState:
        if self._state is None:
            raise StateError(f"teleport resource {self.handle} was already consumed")
        state, self._state = self._state, None
        return state


def teleport(
    state: StateLike, resource: Optional[TeleportResource], rng: np.random.Generator
) -> Tuple[WeylIndex, DensityMatrix]:
    """Bell-measure the input with the sender half; the receiver half ends up as U_i rho U_i^dagger."""
    if resource is None:
        raise StateError("no predistributed resource for teleportation")
    if resource.d != state.dim:
        raise ArgumentError(f"resource has d={resource.d}, state has d={state.dim}")
    pair = resource.consume()
    if isinstance(state, PureState):
        idx, rest = qc.bell_measure(qc.tensor_with(state, pair), state.dim, rng)
        return idx, rest.projector()
    # for a mixed input the outcome is uniform and independent of rho
    return randomize(state, rng)


def send_s2_teleport(
    state: StateLike,
    resource: Optional[TeleportResource],
    src: Event,
    dst: Event,
    *,
    classical_leg: LegConfig,
    rng: np.random.Generator,
    datum_dst: Optional[Event] = None,
    round: int = 0,
    branch: int = 0,
    handle: Optional[str] = None,
) -> Tuple[Message, DensityMatrix]:
    """Teleport from src to the resource's far half at dst.

    Returns the classical message carrying the outcome (to `datum_dst`, default
    dst) and the uncorrected state at dst; derandomize() with the outcome
    recovers the input.
    """
    if classical_leg.channel.is_quantum:
        raise ArgumentError("the teleport outcome needs a classical channel")
    target = dst if datum_dst is None else datum_dst
    check_causal(src, target, classical_leg.speed_limit)
    idx, received = teleport(state, resource, rng)
    LOG.debug("[channels] teleport round=%d branch=%d outcome=%d", round, branch, idx.flat)
    msg = stamp(
        "datum", classical_leg.channel, src, target,
        speed_limit=classical_leg.speed_limit, round=round, branch=branch,
        payload=idx, handle=handle, unveil=True,
    )
    return msg, received


# ---------- S3


def send_s3_randomized(
    state: StateLike,
    src: Event,
    dst: Event,
    *,
    quantum_leg: LegConfig,
    rng: np.random.Generator,
    datum_dst: Optional[Event] = None,
    round: int = 0,
    branch: int = 0,
    handle: Optional[str] = None,
) -> Tuple[Message, Message]:
    """Randomize at src, send U_i rho openly, send i over the secure classical channel."""
    target = dst if datum_dst is None else datum_dst
    check_causal(src, dst, quantum_leg.speed_limit)
    check_causal(src, target, 1.0)
    idx, scrambled = randomize(_as_density(state), rng)
    out = apply_loss(scrambled, quantum_leg.loss, rng)
    quantum = stamp(
        "qudit", ChannelKind.RANDOMIZED_TRANSMISSION, src, dst,
        speed_limit=quantum_leg.speed_limit, round=round, branch=branch,
        payload=out, handle=handle, visible=True, lost=out is None,
    )
    classical = stamp(
        "datum", ChannelKind.CLASSICAL_SECURE, src, target,
        round=round, branch=branch, payload=idx, handle=handle, visible=False, unveil=True,
    )
    return quantum, classical
