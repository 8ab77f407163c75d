"""Pydantic models for Monte Carlo estimates and martingale diagnostics."""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class McEstimate(BaseModel):
    """Bernoulli success rate with a Wilson score interval."""
    trials: int = Field(ge=0)
    successes: int = Field(ge=0)
    confidence: float = Field(default=0.95, gt=0.0, lt=1.0)
    point: float
    ci_low: float
    ci_high: float

    @model_validator(mode="after")
    def _ordered(self) -> "McEstimate":
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError("interval must contain the point estimate")
        return self

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


class BinEstimate(BaseModel):
    k_bucket: int
    sign: int
    count: int
    mean: float
    ci_low: float
    ci_high: float


class SupermartingaleReport(BaseModel):
    traces: int
    bins: List[BinEstimate]
    max_mean: Optional[float] = None
    max_ci_high: Optional[float] = None
    violated: bool = False
