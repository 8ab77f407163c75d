"""Pydantic models for experiment specs, per-run summaries and results documents."""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from qtransmit.models.protocol import ProtocolConfig, Verdict
from qtransmit.models.spacetime import CommitmentReport
from qtransmit.models.stats import McEstimate

SCHEMA_VERSION = "1.0"

StrategyName = Literal["honest", "cloner", "split", "teleport_postselect", "collective_isometry"]


class StrategySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: StrategyName
    params: Dict[str, Any] = {}


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    results: Optional[str] = None
    transcript: Optional[str] = None
    transcript_runs: int = Field(default=1, ge=1)
    table: Optional[str] = None


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol: ProtocolConfig
    strategy: StrategySpec
    trials: int = Field(ge=1)
    confidence: float = Field(default=0.95, gt=0.0, lt=1.0)
    outputs: OutputSpec = OutputSpec()
    workers: Optional[int] = Field(default=None, ge=1)
    units: Literal["natural", "SI"] = "natural"


class RunSummary(BaseModel):
    """What one protocol run contributes to the aggregate."""
    index: int
    verdicts: List[Verdict]
    passes: List[int]
    tests: List[int]
    aborted: bool = False
    violations: List[str] = []
    token_returnable: bool = False
    transcript: Optional[List[str]] = None


class Bounds(BaseModel):
    cloning: Optional[float] = None
    azuma: float
    loss_tolerance: float
    accept_sum_limit: Optional[float] = None


class ResultsDocument(BaseModel):
    """Self-describing results; rerunning `spec` reproduces every count."""
    schema_version: str = SCHEMA_VERSION
    spec: ExperimentSpec
    runs: int
    accept: List[McEstimate]
    pass_rate: List[McEstimate]
    inconclusive: List[McEstimate]
    accept_sum: float
    pass_rate_sum: float
    within_cloning_bound: Optional[bool] = None
    bounds: Bounds
    verdicts: List[Dict[str, int]]
    aborted: int = 0
    audit_violation_count: int = 0
    audit_violations: List[str] = []
    token_returnable: int = 0
    wall_time: float = 0.0


class SpecCheck(BaseModel):
    """Outcome of `validate`: admissible geometry plus the delay report."""
    ok: bool
    diagnostics: List[str] = []
    commitment: Optional[CommitmentReport] = None
    committed_bits: Optional[float] = None
