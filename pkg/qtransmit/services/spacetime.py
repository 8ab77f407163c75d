"""Minkowski interval classification and protocol geometry checks."""

from __future__ import annotations

import itertools
import math
from typing import Optional, Tuple

import numpy as np

from qtransmit.core.config import get_settings
from qtransmit.core.errors import ArgumentError
from qtransmit.models.spacetime import (
    Causal,
    CommitmentReport,
    Direction,
    Event,
    GeometryConfig,
    IntervalKind,
    ValidationReport,
    Violation,
)


def _delta(e1: Event, e2: Event) -> Tuple[float, float]:
    if e1.spatial_dim != e2.spatial_dim:
        raise ArgumentError(
            f"spatial dimension mismatch: {e1.spatial_dim} vs {e2.spatial_dim}"
        )
    dt = e2.t - e1.t
    dx = float(np.linalg.norm(np.subtract(e2.x, e1.x)))
    return dt, dx


def interval(e1: Event, e2: Event) -> float:
    """(dt)^2 - |dx|^2; positive is timelike."""
    dt, dx = _delta(e1, e2)
    return dt * dt - dx * dx


def classify(e1: Event, e2: Event, tau_geo: Optional[float] = None) -> IntervalKind:
    tau = get_settings().tau_geo if tau_geo is None else tau_geo
    dt, dx = _delta(e1, e2)
    s = dt * dt - dx * dx
    if dt > 0:
        direction = Direction.FUTURE
    elif dt < 0:
        direction = Direction.PAST
    else:
        direction = None
    if abs(s) <= tau:
        return IntervalKind(kind=Causal.LIGHTLIKE, direction=direction)
    if s > tau:
        return IntervalKind(kind=Causal.TIMELIKE, direction=direction)
    return IntervalKind(kind=Causal.SPACELIKE)


def is_future_causal(kind: IntervalKind) -> bool:
    return kind.kind != Causal.SPACELIKE and kind.direction == Direction.FUTURE


def causal_reachable(
    src: Event, dst: Event, speed_limit: float = 1.0, tau_geo: Optional[float] = None
) -> bool:
    """Can a signal moving no faster than `speed_limit` get from src to dst?"""
    if not 0.0 < speed_limit <= 1.0:
        raise ArgumentError(f"speed_limit must lie in (0, 1], got {speed_limit}")
    tau = get_settings().tau_geo if tau_geo is None else tau_geo
    dt, dx = _delta(src, dst)
    return dt >= 0 and dt >= dx / speed_limit - tau


def boost(event: Event, v: float) -> Event:
    """Lorentz boost with velocity v along the first spatial axis."""
    if not -1.0 < v < 1.0:
        raise ArgumentError(f"boost velocity must satisfy |v| < 1, got {v}")
    gamma = 1.0 / math.sqrt(1.0 - v * v)
    x0 = event.x[0]
    t = gamma * (event.t - v * x0)
    x = gamma * (x0 - v * event.t)
    return Event(t=t, x=(x,) + tuple(event.x[1:]))


def validate_geometry(g: GeometryConfig) -> ValidationReport:
    if g.n_branches < 2:
        raise ArgumentError(f"geometry needs at least 2 branches, got {g.n_branches}")
    tau = g.tau_geo
    violations = []

    for j, br in enumerate(g.branches, start=1):
        to_q = classify(g.p, br.q, tau)
        if not is_future_causal(to_q):
            violations.append(Violation(
                code="q_not_in_future",
                detail=f"Q{j} is {to_q} from P, not in its causal future",
                branches=(j,),
            ))
        # three null future segments along one ray <=> P, P'_j, Q_j lightlike-collinear
        legs = [
            ("P", f"P'{j}", classify(g.p, br.p_prime, tau)),
            (f"P'{j}", f"Q{j}", classify(br.p_prime, br.q, tau)),
            ("P", f"Q{j}", to_q),
        ]
        bad = [
            f"{a}->{b} is {k}" for a, b, k in legs
            if not (k.kind == Causal.LIGHTLIKE and k.direction == Direction.FUTURE)
        ]
        if bad:
            violations.append(Violation(
                code="branch_not_lightlike_collinear",
                detail=f"branch {j}: " + ", ".join(bad),
                branches=(j,),
            ))

    for (j, bj), (k, bk) in itertools.combinations(enumerate(g.branches, start=1), 2):
        kp = classify(bj.p_prime, bk.p_prime, tau)
        if kp.kind != Causal.SPACELIKE:
            violations.append(Violation(
                code="p_prime_not_spacelike",
                detail=f"P'{j} and P'{k} are {kp}",
                branches=(j, k),
            ))
        kq = classify(bj.q, bk.q, tau)
        if kq.kind != Causal.SPACELIKE:
            violations.append(Violation(
                code="q_not_spacelike",
                detail=f"Q{j} and Q{k} are {kq}",
                branches=(j, k),
            ))

    return ValidationReport(violations=violations)


def commitment_report(
    g: GeometryConfig, speed_limit: float = 1.0, latency: float = 0.0
) -> CommitmentReport:
    """How late Alice may decide at P's location and still deliver to every P'_j.

    Negative slack means the choice must effectively be made before P; the
    value is reported, never enforced.
    """
    if not 0.0 < speed_limit <= 1.0:
        raise ArgumentError(f"speed_limit must lie in (0, 1], got {speed_limit}")
    latest, slack = [], []
    for br in g.branches:
        _, dx = _delta(g.p, br.p_prime)
        t = br.p_prime.t - dx / speed_limit - latency
        latest.append(t)
        slack.append(t - g.p.t)
    return CommitmentReport(latest_choice=latest, slack=slack)


def committed_bits(n_branches: int) -> float:
    """Bits committed by choosing one of n destination branches."""
    if n_branches < 2:
        raise ArgumentError("need at least 2 branches to commit anything")
    return math.log2(n_branches)
