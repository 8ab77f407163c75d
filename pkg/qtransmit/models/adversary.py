"""Pydantic models for strategy outputs and strategy parameters."""

from __future__ import annotations

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from qtransmit.models.quantum import DensityMatrix
from qtransmit.models.spacetime import Event


class BranchOutput(BaseModel):
    """What Alice hands towards one branch in one round.

    `state` is the clear state Bob should hold after derandomizing; None means
    nothing is returned there. `classical_route` pins the datum's emit and
    deliver events instead of letting the engine schedule it.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    state: Optional[DensityMatrix]
    real: bool
    classical_route: Optional[Tuple[Event, Event]] = None


class RoundAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    outputs: List[BranchOutput]
    op: str = "route"


# ---------- parameters accepted from experiment specs


class HonestParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    branch: int = Field(default=0, ge=0)


class ClonerParams(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SplitParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    fractions: Optional[List[float]] = None

    @model_validator(mode="after")
    def _sums_to_one(self) -> "SplitParams":
        if self.fractions is not None:
            if any(f < 0 for f in self.fractions) or abs(sum(self.fractions) - 1.0) > 1e-9:
                raise ValueError("fractions must be non-negative and sum to 1")
        return self


OpName = Literal["cloner", "identity", "random"]


class PostselectParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    op: OpName = "cloner"
    k: int = Field(default=2, ge=1, le=4)
    pattern: Optional[List[Tuple[bool, bool]]] = None
    op_seed: int = 0
    acceptance_floor: float = Field(default=1e-4, gt=0.0, lt=1.0)


class CollectiveParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    op: OpName = "random"
    k: int = Field(default=2, ge=1)
    op_seed: int = 0
