"""Concentration bounds, binomial tails, Wilson estimates and hypothesis tests."""

from __future__ import annotations

import math
from collections import Counter
from typing import Hashable, List, Sequence

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

from qtransmit.core.errors import ArgumentError
from qtransmit.core.logs import get_logger
from qtransmit.models.protocol import MartingaleTrace
from qtransmit.models.stats import BinEstimate, McEstimate, SupermartingaleReport

LOG = get_logger("stats")

# bound comparisons use bound + SIGMA_FACTOR * Wilson half-width
SIGMA_FACTOR = 5.0


def azuma_tail(n: int, eps: float, c: float) -> float:
    """exp(-N eps^2 / (2 c^2)) for a supermartingale with increments bounded by c."""
    if n < 1:
        raise ArgumentError(f"N must be >= 1, got {n}")
    if eps < 0 or c <= 0:
        raise ArgumentError(f"need eps >= 0 and c > 0, got eps={eps}, c={c}")
    return math.exp(-n * eps * eps / (2.0 * c * c))


def binomial_tail(n: int, k: int, p: float) -> float:
    """P(Bin(n, p) >= k), summed in log space."""
    if n < 0 or not 0 <= k <= n:
        raise ArgumentError(f"need 0 <= k <= n, got n={n}, k={k}")
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"p must lie in [0, 1], got {p}")
    if k == 0:
        return 1.0
    logs = sps.binom.logpmf(np.arange(k, n + 1), n, p)
    return float(min(1.0, math.exp(logsumexp(logs))))


def uniformity_test(counts: Sequence[int]) -> float:
    """Chi-square goodness-of-fit p-value against the uniform distribution."""
    counts = np.asarray(counts, dtype=float)
    m = counts.size
    if m < 2:
        raise ArgumentError("uniformity test needs at least 2 categories")
    if counts.sum() < 5 * m:
        raise ArgumentError(f"undersampled: {int(counts.sum())} draws over {m} categories (need >= {5 * m})")
    return float(sps.chisquare(counts).pvalue)


def two_sample_test(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chi-square test that two categorical samples share one distribution.

    Categories seen in neither sample are dropped; a single shared category
    gives p = 1.
    """
    if not a or not b:
        raise ArgumentError("both samples must be non-empty")
    ca, cb = Counter(a), Counter(b)
    keys = sorted(set(ca) | set(cb), key=repr)
    if len(keys) < 2:
        return 1.0
    table = np.array([[ca[k] for k in keys], [cb[k] for k in keys]], dtype=float)
    return float(sps.chi2_contingency(table, correction=False).pvalue)


# ---------- Monte Carlo estimates


def wilson(successes: int, trials: int, confidence: float = 0.95) -> McEstimate:
    if trials < 1:
        raise ArgumentError("an estimate needs at least one trial")
    if not 0 <= successes <= trials:
        raise ArgumentError(f"successes {successes} outside [0, {trials}]")
    point = successes / trials
    ci = sps.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return McEstimate(
        trials=trials,
        successes=successes,
        confidence=confidence,
        point=point,
        ci_low=min(point, max(0.0, float(ci.low))),
        ci_high=max(point, min(1.0, float(ci.high))),
    )


def within_bound(estimates: Sequence[McEstimate], bound: float, sigmas: float = SIGMA_FACTOR) -> bool:
    """Sum of point estimates stays under bound plus the Monte Carlo allowance."""
    total = sum(e.point for e in estimates)
    slack = sigmas * sum(e.half_width for e in estimates)
    return total <= bound + slack


# ---------- martingale diagnostics


def supermartingale_check(
    traces: Sequence[MartingaleTrace],
    *,
    confidence: float = 0.99,
    buckets: int = 4,
    min_traces: int = 1000,
    min_bin: int = 30,
) -> SupermartingaleReport:
    """Binned conditional increment means given (k bucket, sign of Z_{k-1}).

    A violation is flagged only when a bin's lower confidence limit is above
    zero; the level is Bonferroni-split over the populated bins.
    """
    if len(traces) < min_traces:
        raise ArgumentError(f"need at least {min_traces} traces, got {len(traces)}")
    lengths = {len(t.z) for t in traces}
    if len(lengths) != 1:
        raise ArgumentError("traces must come from identically configured runs")
    n = lengths.pop() - 1
    if n < 1:
        raise ArgumentError("traces have no increments")

    z = np.array([t.z for t in traces], dtype=float)
    inc = np.diff(z, axis=1)
    prev_sign = np.sign(z[:, :-1]).astype(int)
    k_bucket = np.broadcast_to(np.minimum(np.arange(n) * buckets // n, buckets - 1), inc.shape)

    groups = []
    for kb in range(buckets):
        for s in (-1, 0, 1):
            mask = (k_bucket == kb) & (prev_sign == s)
            if mask.sum() >= min_bin:
                groups.append((kb, s, inc[mask]))
    if not groups:
        return SupermartingaleReport(traces=len(traces), bins=[])

    z_crit = sps.norm.ppf(1.0 - (1.0 - confidence) / (2 * len(groups)))
    bins: List[BinEstimate] = []
    for kb, s, vals in groups:
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        bins.append(BinEstimate(
            k_bucket=kb, sign=s, count=int(vals.size), mean=mean,
            ci_low=mean - z_crit * se, ci_high=mean + z_crit * se,
        ))
    worst = max(bins, key=lambda b: b.mean)
    violated = any(b.ci_low > 0 for b in bins)
    if violated:
        LOG.warning("[stats] supermartingale check flagged bin k=%d sign=%d mean=%.4f",
                    worst.k_bucket, worst.sign, worst.mean)
    return SupermartingaleReport(
        traces=len(traces), bins=bins, max_mean=worst.mean,
        max_ci_high=max(b.ci_high for b in bins), violated=violated,
    )
