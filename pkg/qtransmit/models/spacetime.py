"""Pydantic models for Minkowski events and protocol geometry (units with c = 1)."""

from __future__ import annotations

import math
from enum import Enum
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SPEED_OF_LIGHT_M_S = 299_792_458.0


class Event(BaseModel):
    """A spacetime point: time t and 1 or 3 spatial coordinates."""
    model_config = ConfigDict(frozen=True)

    t: float
    x: Tuple[float, ...]

    @field_validator("x", mode="before")
    @classmethod
    def _scalar_to_tuple(cls, v):
        if isinstance(v, (int, float)):
            return (float(v),)
        return tuple(float(c) for c in v)

    @model_validator(mode="after")
    def _check(self) -> "Event":
        if len(self.x) not in (1, 3):
            raise ValueError(f"spatial dimension must be 1 or 3, got {len(self.x)}")
        if not all(math.isfinite(c) for c in (self.t, *self.x)):
            raise ValueError("event coordinates must be finite")
        return self

    @property
    def spatial_dim(self) -> int:
        return len(self.x)


class Causal(str, Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"


class Direction(str, Enum):
    FUTURE = "future"
    PAST = "past"


class IntervalKind(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Causal
    direction: Optional[Direction] = None

    def __str__(self) -> str:
        if self.direction is None:
            return self.kind.value
        return f"{self.kind.value}({self.direction.value})"


class Branch(BaseModel):
    """One destination wing: Alice's return point P'_j and the far site Q_j."""
    model_config = ConfigDict(frozen=True)

    p_prime: Event
    q: Event


class GeometryConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p: Event
    branches: List[Branch]
    spatial_dim: Literal[1, 3] = 1
    tau_geo: float = Field(default=1e-9, gt=0)

    @model_validator(mode="after")
    def _dims_agree(self) -> "GeometryConfig":
        events = [self.p] + [e for b in self.branches for e in (b.p_prime, b.q)]
        bad = [e for e in events if e.spatial_dim != self.spatial_dim]
        if bad:
            raise ValueError(f"all events must have spatial dimension {self.spatial_dim}")
        return self

    @property
    def n_branches(self) -> int:
        return len(self.branches)


class Violation(BaseModel):
    code: str
    detail: str
    branches: Tuple[int, ...] = ()


class ValidationReport(BaseModel):
    """Every violated admissibility predicate; empty means admissible."""
    violations: List[Violation] = []

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> List[str]:
        return [f"{v.code}: {v.detail}" for v in self.violations]


class CommitmentReport(BaseModel):
    """Latest branch-choice time at P's location that still reaches each P'_j."""
    latest_choice: List[float]
    slack: List[float]

    @property
    def min_slack(self) -> float:
        return min(self.slack)


class Lab(BaseModel):
    """Axis-aligned spatial box a party controls for all time."""
    model_config = ConfigDict(frozen=True)

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    @model_validator(mode="after")
    def _ordered(self) -> "Lab":
        if len(self.lo) != len(self.hi) or any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("lab corners must have equal dimension and lo <= hi")
        return self

    def contains(self, x: Tuple[float, ...], tol: float = 0.0) -> bool:
        return all(a - tol <= c <= b + tol for a, b, c in zip(self.lo, self.hi, x))


class SecureRegion(BaseModel):
    """Union of labs; a physically secure path must stay inside it."""
    model_config = ConfigDict(frozen=True)

    labs: List[Lab]

    def covers(self, x: Tuple[float, ...], tol: float = 0.0) -> bool:
        return any(lab.contains(x, tol) for lab in self.labs)
