"""Seeded random streams.

Every stochastic operation takes an explicit `numpy.random.Generator`.
Per-run streams are derived from (seed, run index) only, so results do not
depend on how runs are scheduled across workers.
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for protocol run `run_index` of an experiment."""
    return np.random.default_rng(np.random.SeedSequence([seed, run_index]))


def child_rng(rng: np.random.Generator) -> np.random.Generator:
    """Split off an independent stream (e.g. for a strategy's private coins)."""
    return np.random.default_rng(rng.integers(0, 2**63 - 1))
