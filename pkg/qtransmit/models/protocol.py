"""Pydantic models for channels, protocol configuration, transcripts and tallies."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qtransmit.models.spacetime import Event, GeometryConfig, SecureRegion


class ChannelKind(str, Enum):
    PHYSICALLY_SECURE = "S1"
    TELEPORT_PREDISTRIBUTED = "S2"
    RANDOMIZED_TRANSMISSION = "S3"
    CLASSICAL_SECURE = "classical_secure"
    CLASSICAL_PUBLIC = "classical_public"

    @property
    def is_quantum(self) -> bool:
        return self in (
            ChannelKind.PHYSICALLY_SECURE,
            ChannelKind.TELEPORT_PREDISTRIBUTED,
            ChannelKind.RANDOMIZED_TRANSMISSION,
        )

    @property
    def content_visible(self) -> bool:
        """Can the other party read what is in flight? Timing is always visible."""
        return self in (ChannelKind.RANDOMIZED_TRANSMISSION, ChannelKind.CLASSICAL_PUBLIC)


class LossModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    loss_prob: float = Field(default=0.0, ge=0.0, lt=1.0)
    depolarize_prob: float = Field(default=0.0, ge=0.0, le=1.0)

    @property
    def is_ideal(self) -> bool:
        return self.loss_prob == 0.0 and self.depolarize_prob == 0.0


class LegConfig(BaseModel):
    """One transport leg: channel kind, noise, signal speed and processing latency."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    channel: ChannelKind
    loss: LossModel = LossModel()
    speed_limit: float = Field(default=1.0, gt=0.0, le=1.0)
    latency: float = Field(default=0.0, ge=0.0)


class VerifyMode(str, Enum):
    DIRECT = "direct"
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"


class ThresholdConvention(str, Enum):
    METHODS = "methods"  # N_i >= (N/2)(1 + 2/(d+1) + eps)
    BODY = "body"  # N_i > (N/2)(1 + 1/(d+1) + eps)
    TOLERANCE = "tolerance"  # N_i >= (1 - lambda) N


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    INCONCLUSIVE = "inconclusive"


class ProtocolConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(ge=2)
    n: int = Field(ge=1)
    geometry: GeometryConfig
    verify_mode: VerifyMode = VerifyMode.DIRECT
    epsilon: float = Field(gt=0.0)
    m: Optional[int] = Field(default=None, ge=1)
    threshold_convention: ThresholdConvention = ThresholdConvention.METHODS
    tolerated_loss: float = Field(default=0.0, ge=0.0, lt=1.0)
    quantum_leg: LegConfig = LegConfig(channel=ChannelKind.PHYSICALLY_SECURE)
    classical_leg: LegConfig = LegConfig(channel=ChannelKind.CLASSICAL_SECURE)
    bob_leg: LegConfig = LegConfig(channel=ChannelKind.PHYSICALLY_SECURE)
    storage_lifetime: Optional[float] = Field(default=None, gt=0.0)
    round_spacing: float = Field(default=0.0, ge=0.0)
    broadcast_classical: bool = False
    multi_site_bound: Optional[float] = Field(default=None, gt=1.0)
    alice_labs: Optional[SecureRegion] = None
    seed: int

    @model_validator(mode="before")
    @classmethod
    def _derive_b3_n(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("verify_mode") in ("B3", VerifyMode.B3):
            if data.get("n") is None and data.get("m") is not None and data.get("d") is not None:
                data = dict(data)
                data["n"] = int(data["m"]) * int(data["d"]) ** 2
        return data

    @model_validator(mode="after")
    def _check(self) -> "ProtocolConfig":
        if self.verify_mode == VerifyMode.B3:
            if self.m is None or self.n != self.m * self.d ** 2:
                raise ValueError(f"B3 mode requires n = m * d^2 (d={self.d}, m={self.m}, n={self.n})")
        if self.quantum_leg.channel.is_quantum is False:
            raise ValueError("quantum_leg must use a quantum channel kind (S1, S2 or S3)")
        if self.classical_leg.channel.is_quantum:
            raise ValueError("classical_leg must use a classical channel kind")
        if self.threshold_convention == ThresholdConvention.TOLERANCE and self.tolerated_loss == 0.0:
            raise ValueError("the tolerance convention needs tolerated_loss > 0")
        if (
            self.quantum_leg.channel == ChannelKind.RANDOMIZED_TRANSMISSION
            and self.classical_leg.channel != ChannelKind.CLASSICAL_SECURE
        ):
            # a public datum next to a visible randomized qudit gives the state away
            raise ValueError("S3 transmission requires a classical_secure classical_leg")
        if (
            self.geometry.n_branches > 2
            and self.threshold_convention == ThresholdConvention.METHODS
            and self.multi_site_bound is None
        ):
            raise ValueError("more than two branches needs multi_site_bound for the methods threshold")
        return self

    @property
    def n_branches(self) -> int:
        return self.geometry.n_branches


class Message(BaseModel):
    """A single causally-stamped transmission."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    seq: int = -1
    purpose: str
    channel: ChannelKind
    emit: Event
    deliver: Event
    speed_limit: float = 1.0
    visible_to_adversary: bool
    round: int
    branch: int
    handle: Optional[str] = None
    lost: bool = False
    payload: Any = Field(default=None, exclude=True)
    payload_digest: str = ""
    unveil: bool = False
    violation: bool = False

    @property
    def is_quantum(self) -> bool:
        return self.channel.is_quantum


class Measurement(BaseModel):
    site: int
    round: int
    at: Event
    handle: Optional[str] = None
    guess: Optional[int] = None
    outcome: bool
    stage: str = "verify"


class Lifecycle(BaseModel):
    """Creation, transformation or consumption of qudit handles."""
    op: str
    at: Event
    parents: Tuple[str, ...] = ()
    children: Tuple[str, ...] = ()


class StrategyInput(BaseModel):
    handle: str
    round: int
    visible_to_adversary: bool = False
    alice_region: bool = True


class TestTally(BaseModel):
    """Per-site pass indicators D_j[k] and derived counts."""
    __test__ = False

    d: int
    n: int
    indicators: List[List[int]]
    matched: Optional[List[List[int]]] = None
    thresholds: List[float] = []
    verdicts: List[Verdict] = []

    @property
    def passes(self) -> List[int]:
        return [int(sum(row)) for row in self.indicators]

    @property
    def matched_counts(self) -> Optional[List[int]]:
        if self.matched is None:
            return None
        return [int(sum(row)) for row in self.matched]

    def martingale(self, c: Optional[float] = None) -> "MartingaleTrace":
        """Z_k = sum_{j<=k} (D1_j + D2_j) - k c, with c = 1 + 2/(d+1) by default."""
        c = 1.0 + 2.0 / (self.d + 1) if c is None else c
        total = np.sum(np.asarray(self.indicators, dtype=float), axis=0)
        z = np.concatenate([[0.0], np.cumsum(total - c)])
        return MartingaleTrace(z=z.tolist(), c=c)


class MartingaleTrace(BaseModel):
    z: List[float]
    c: float

    @model_validator(mode="after")
    def _bounded_increments(self) -> "MartingaleTrace":
        if self.z and self.z[0] != 0.0:
            raise ValueError("martingale trace must start at Z_0 = 0")
        steps = np.diff(np.asarray(self.z, dtype=float))
        if steps.size and np.max(np.abs(steps)) > self.c + 1e-12:
            raise ValueError(f"increment exceeds bound c={self.c}")
        return self

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.asarray(self.z, dtype=float))


class TranscriptRecord(BaseModel):
    """Causally ordered log of one protocol run."""
    strategy: str
    branch_choice: Optional[int] = None
    verify_mode: VerifyMode
    d: int
    commit_event: Event
    messages: List[Message] = []
    measurements: List[Measurement] = []
    lifecycle: List[Lifecycle] = []
    strategy_inputs: List[StrategyInput] = []
    tally: Optional[TestTally] = None
    aborted: Optional[str] = None
    token_returnable: bool = False

    @property
    def verdicts(self) -> List[Verdict]:
        return list(self.tally.verdicts) if self.tally else []

    def unveil_times(self) -> dict:
        """Earliest unveil delivery time per site."""
        out: dict = {}
        for m in self.messages:
            if m.unveil and not m.violation:
                out[m.branch] = min(out.get(m.branch, math.inf), m.deliver.t)
        return out


class AdversaryView(BaseModel):
    """What Bob can observe before the first unveil: timing of every message plus visible contents."""
    cutoff: float
    observations: List[Tuple[str, int, int, float, float, Optional[int]]] = []

    def key(self) -> str:
        """Categorical label for hypothesis tests."""
        return repr([(p, b, r, round(e, 9), round(t, 9), c) for p, b, r, e, t, c in self.observations])
