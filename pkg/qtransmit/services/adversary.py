"""Alice's strategies: honest routing, cloning, splitting and collective attacks."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.stats import unitary_group

from qtransmit.core.cache import cached
from qtransmit.core.errors import (
    ArgumentError,
    ConfigError,
    SamplingBudgetError,
    UnsupportedStrategyError,
)
from qtransmit.core.logs import get_logger
from qtransmit.core.rng import make_rng
from qtransmit.models.adversary import (
    BranchOutput,
    ClonerParams,
    CollectiveParams,
    HonestParams,
    PostselectParams,
    RoundAction,
    SplitParams,
)
from qtransmit.models.quantum import BipartiteState, DensityMatrix, PureState
from qtransmit.services import qudit_core as qc

LOG = get_logger("adversary")

# largest dense isometry (rows * columns) a collective op may use
MAX_ISOMETRY_ENTRIES = 1 << 22

# rejection sampling: attempts before the acceptance floor is enforced, and hard cap per sample
MIN_ATTEMPTS = 200
MAX_ATTEMPTS_PER_SAMPLE = 1_000_000


def _hermitian_density(mat: np.ndarray) -> DensityMatrix:
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix.trusted(dim=mat.shape[0], mat=mat / np.trace(mat).real)


# ---------- universal cloner


@cached
def symmetric_projector(d: int) -> np.ndarray:
    """(I + SWAP)/2 on C^d (x) C^d."""
    swap = np.eye(d * d, dtype=np.complex128).reshape(d, d, d, d).transpose(1, 0, 2, 3).reshape(d * d, d * d)
    return 0.5 * (np.eye(d * d, dtype=np.complex128) + swap)


@cached
def cloner_kraus(d: int) -> np.ndarray:
    """K_m = sqrt(2/(d+1)) P_sym (I (x) |m>), stacked as shape (d, d^2, d)."""
    p_sym = symmetric_projector(d)
    basis = np.eye(d, dtype=np.complex128)
    scale = math.sqrt(2.0 / (d + 1))
    return np.stack([scale * p_sym @ np.kron(np.eye(d), basis[:, m:m + 1]) for m in range(d)])


@cached
def cloner_isometry(d: int) -> np.ndarray:
    """Stinespring isometry C^d -> clone1 (x) clone2 (x) ancilla."""
    basis = np.eye(d, dtype=np.complex128)
    return sum(np.kron(k, basis[:, m:m + 1]) for m, k in enumerate(cloner_kraus(d)))


class ClonerChannel:
    """Optimal symmetric 1 -> 2 cloner rho -> (2/(d+1)) P_sym (rho (x) I) P_sym."""

    def __init__(self, d: int):
        if d < 2:
            raise ArgumentError(f"cloner needs d >= 2, got {d}")
        self.d = d

    @property
    def kraus(self) -> np.ndarray:
        return cloner_kraus(self.d)

    @property
    def marginal_fidelity(self) -> float:
        return 0.5 + 1.0 / (self.d + 1)

    def apply(self, rho: DensityMatrix) -> np.ndarray:
        """Joint two-clone output as a d^2 x d^2 matrix."""
        if rho.dim != self.d:
            raise ArgumentError(f"cloner built for d={self.d}, got state of d={rho.dim}")
        ks = self.kraus
        return np.einsum("mij,jk,mlk->il", ks, rho.mat, ks.conj())

    def marginals(self, rho: DensityMatrix) -> Tuple[DensityMatrix, DensityMatrix]:
        joint = self.apply(rho)
        dims = (self.d, self.d)
        return (
            _hermitian_density(qc.partial_trace(joint, dims, 0)),
            _hermitian_density(qc.partial_trace(joint, dims, 1)),
        )


# ---------- collective operations


class CollectiveOp:
    """Isometry from k input qudits to labelled output wires.

    `site_wires[s][p]` is the output wire that carries input position p to
    site s; the remaining wires stay with Alice.
    """

    def __init__(self, d: int, k: int, wire_dims: Sequence[int], iso: np.ndarray,
                 site_wires: Sequence[Sequence[int]], name: str):
        rows = int(np.prod(wire_dims))
        if iso.shape != (rows, d ** k):
            raise ArgumentError(f"isometry shape {iso.shape} does not match wires {tuple(wire_dims)} and k={k}")
        self.d = d
        self.k = k
        self.wire_dims = tuple(int(w) for w in wire_dims)
        self.iso = iso
        self.site_wires = tuple(tuple(s) for s in site_wires)
        self.name = name

    def apply(self, inputs: np.ndarray) -> np.ndarray:
        """Map input amplitudes (leading axis d^k) to output tensors with one axis per wire."""
        out = self.iso @ inputs
        return out.reshape(self.wire_dims + inputs.shape[1:])


def _check_size(d: int, k: int) -> None:
    if (d ** (3 * k)) * (d ** k) > MAX_ISOMETRY_ENTRIES:
        raise UnsupportedStrategyError(f"collective op on k={k} qudits of d={d} is too large to simulate densely")


def _per_position(d: int, k: int, single: np.ndarray, name: str) -> CollectiveOp:
    _check_size(d, k)
    iso = reduce(np.kron, [single] * k)
    return CollectiveOp(d, k, (d,) * (3 * k), iso,
                        (tuple(3 * p for p in range(k)), tuple(3 * p + 1 for p in range(k))), name)


def product_cloner_op(d: int, k: int) -> CollectiveOp:
    return _per_position(d, k, cloner_isometry(d), "cloner")


def identity_op(d: int, k: int) -> CollectiveOp:
    """Site 1 gets the input untouched, site 2 half of a pair whose partner Alice keeps."""
    phi = (np.eye(d, dtype=np.complex128) / math.sqrt(d)).reshape(-1, 1)
    return _per_position(d, k, np.kron(np.eye(d, dtype=np.complex128), phi), "identity")


def random_isometry_op(d: int, k: int, rng: np.random.Generator) -> CollectiveOp:
    _check_size(d, k)
    dim_out = d ** (3 * k)
    u = unitary_group.rvs(dim_out, random_state=rng)
    return CollectiveOp(d, k, (d,) * (3 * k), np.ascontiguousarray(u[:, : d ** k]),
                        (tuple(3 * p for p in range(k)), tuple(3 * p + 1 for p in range(k))), "random")


def build_op(name: str, d: int, k: int, op_seed: int = 0) -> CollectiveOp:
    if name == "cloner":
        return product_cloner_op(d, k)
    if name == "identity":
        return identity_op(d, k)
    if name == "random":
        return random_isometry_op(d, k, make_rng(op_seed))
    raise ArgumentError(f"unknown collective op {name!r}")


def _on_axis(tensor: np.ndarray, op: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(op, tensor, axes=([1], [axis])), 0, axis)


def _reduced(tensor: np.ndarray, axis: int) -> np.ndarray:
    m = np.moveaxis(tensor, axis, 0).reshape(tensor.shape[axis], -1)
    return m @ m.conj().T


# ---------- strategies


class Strategy(ABC):
    """Alice's behaviour for one protocol run; one instance per run."""

    name: str = "strategy"

    def __init__(self) -> None:
        self.rng: Optional[np.random.Generator] = None
        self.n_rounds = 0
        self.n_branches = 0

    @property
    def branch_choice(self) -> Optional[int]:
        """The committed branch, when the strategy has one."""
        return None

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        self.n_rounds = n_rounds
        self.n_branches = n_branches
        self.rng = rng

    @abstractmethod
    def act(self, states: List[PureState]) -> List[RoundAction]:
        """One RoundAction per received state, each with one output per branch."""

    def _dummy(self, d: int) -> BranchOutput:
        return BranchOutput(state=DensityMatrix.maximally_mixed(d), real=False)


class HonestStrategy(Strategy):
    name = "honest"

    def __init__(self, branch: int = 0):
        super().__init__()
        self.branch = branch

    @property
    def branch_choice(self) -> Optional[int]:
        return self.branch

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        if not 0 <= self.branch < n_branches:
            raise ArgumentError(f"branch {self.branch} out of range for {n_branches} branches")
        super().begin(n_rounds, n_branches, rng)

    def act(self, states: List[PureState]) -> List[RoundAction]:
        actions = []
        for psi in states:
            outputs = [
                BranchOutput(state=psi.projector(), real=True) if j == self.branch else self._dummy(psi.dim)
                for j in range(self.n_branches)
            ]
            actions.append(RoundAction(outputs=outputs, op="route"))
        return actions


class ClonerStrategy(Strategy):
    name = "cloner"

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        if n_branches != 2:
            raise UnsupportedStrategyError(
                f"the cloner strategy covers exactly 2 branches, got {n_branches}"
            )
        super().begin(n_rounds, n_branches, rng)

    def act(self, states: List[PureState]) -> List[RoundAction]:
        actions = []
        for psi in states:
            c1, c2 = ClonerChannel(psi.dim).marginals(psi.projector())
            actions.append(RoundAction(
                outputs=[BranchOutput(state=c1, real=True), BranchOutput(state=c2, real=True)],
                op="cptp:cloner",
            ))
        return actions


def split_counts(n: int, fractions: Sequence[float]) -> List[int]:
    """Whole-qudit allocation.

    Two branches: the first gets ceil(f * n), the second the rest. More
    branches: leftovers go to the largest remainders, earlier branches first.
    """
    if len(fractions) == 2:
        first = min(n, max(0, math.ceil(fractions[0] * n - 1e-9)))
        return [first, n - first]
    raw = [f * n for f in fractions]
    counts = [int(math.floor(r + 1e-9)) for r in raw]
    left = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda j: -(raw[j] - counts[j]))
    for j in order[:left]:
        counts[j] += 1
    return counts


class SplitStrategy(Strategy):
    """Send a fixed share of the genuine qudits to each branch, dummies elsewhere."""
    name = "split"

    def __init__(self, fraction: float = 0.5, fractions: Optional[Sequence[float]] = None):
        super().__init__()
        self.fraction = fraction
        self.fractions = list(fractions) if fractions is not None else None
        self.assignment: List[int] = []

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        if self.fractions is None:
            if n_branches != 2:
                raise UnsupportedStrategyError("a single split fraction needs exactly 2 branches; pass fractions")
            fractions = [self.fraction, 1.0 - self.fraction]
        else:
            fractions = self.fractions
        if len(fractions) != n_branches:
            raise ArgumentError(f"{len(fractions)} fractions for {n_branches} branches")
        super().begin(n_rounds, n_branches, rng)
        counts = split_counts(n_rounds, fractions)
        targets = np.repeat(np.arange(n_branches), counts)
        self.assignment = [int(t) for t in rng.permutation(targets)]
        LOG.debug("[adversary] split counts %s", counts)

    def act(self, states: List[PureState]) -> List[RoundAction]:
        actions = []
        for k, psi in enumerate(states):
            target = self.assignment[k]
            outputs = [
                BranchOutput(state=psi.projector(), real=True) if j == target else self._dummy(psi.dim)
                for j in range(self.n_branches)
            ]
            actions.append(RoundAction(outputs=outputs, op="route"))
        return actions


class TeleportPostselectStrategy(Strategy):
    """Collective attack reduced to a single qudit.

    Decoy qudits and half of an entangled pair go through the collective op;
    Alice simulates Bob's tests on the decoys, keeps the sample only if they
    match `pattern`, then teleports the real qudit into the pair and undoes the
    teleport rotation on both of its outputs.
    """
    name = "teleport_postselect"

    def __init__(self, op: CollectiveOp, pattern: Optional[Sequence[Tuple[bool, bool]]] = None,
                 acceptance_floor: float = 1e-4):
        super().__init__()
        self.op = op
        self.pattern = [(True, True)] * (op.k - 1) if pattern is None else [tuple(p) for p in pattern]
        if len(self.pattern) != op.k - 1:
            raise ArgumentError(f"pattern needs {op.k - 1} entries for k={op.k}, got {len(self.pattern)}")
        self.acceptance_floor = acceptance_floor
        self.attempts = 0
        self.accepted = 0

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        if n_branches != 2:
            raise UnsupportedStrategyError("teleport-postselect covers exactly 2 branches")
        super().begin(n_rounds, n_branches, rng)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 1.0

    def _postselected(self, rng: np.random.Generator) -> np.ndarray:
        d, k = self.op.d, self.op.k
        phi = np.eye(d, dtype=np.complex128) / math.sqrt(d)
        tries = 0
        while True:
            tries += 1
            self.attempts += 1
            decoys = [qc.haar_state(d, rng) for _ in range(k - 1)]
            prefix = reduce(np.kron, [p.amps for p in decoys], np.ones(1, dtype=np.complex128))
            # rows: decoys then pair half A; columns: partner half B
            tensor = self.op.apply(np.kron(prefix[:, None], phi))
            for p, psi in enumerate(decoys):
                proj = np.outer(psi.amps, psi.amps.conj())
                for s, passed in enumerate(self.pattern[p]):
                    tensor = _on_axis(tensor, proj if passed else np.eye(d) - proj, self.op.site_wires[s][p])
            weight = float(np.vdot(tensor, tensor).real)
            if rng.random() < weight:
                self.accepted += 1
                return tensor / math.sqrt(weight)
            if self.attempts >= MIN_ATTEMPTS and self.acceptance_rate < self.acceptance_floor:
                raise SamplingBudgetError(
                    f"postselection acceptance {self.acceptance_rate:.2e} fell below {self.acceptance_floor:.0e}"
                )
            if tries >= MAX_ATTEMPTS_PER_SAMPLE:
                raise SamplingBudgetError(f"no acceptance after {tries} attempts")

    def sample(self, psi: PureState, rng: np.random.Generator) -> Tuple[DensityMatrix, DensityMatrix]:
        d, k = self.op.d, self.op.k
        if psi.dim != d:
            raise ArgumentError(f"op built for d={d}, got state of d={psi.dim}")
        tensor = self._postselected(rng)
        # partner half B first so the Bell measurement acts on (psi, B)
        held = np.moveaxis(tensor, -1, 0)
        joint = BipartiteState.trusted(dim_a=d * d, dim_b=held.size // d, amps=np.kron(psi.amps, held.reshape(-1)))
        idx, rest = qc.bell_measure(joint, d, rng)
        out = rest.amps.reshape(self.op.wire_dims)
        fix = qc.correction_unitary(idx)
        results = []
        for s in range(2):
            rho = _hermitian_density(_reduced(out, self.op.site_wires[s][k - 1]))
            results.append(qc.apply_unitary(rho, fix))
        return results[0], results[1]

    def conditional_fidelities(self, psi: PureState, rng: np.random.Generator, samples: int) -> Tuple[float, float]:
        """Mean test-pass probabilities at the two sites, conditioned on the pattern."""
        totals = np.zeros(2)
        for _ in range(samples):
            rhos = self.sample(psi, rng)
            totals += [qc.fidelity(r, psi) for r in rhos]
        return float(totals[0] / samples), float(totals[1] / samples)

    def act(self, states: List[PureState]) -> List[RoundAction]:
        actions = []
        for psi in states:
            r1, r2 = self.sample(psi, self.rng)
            actions.append(RoundAction(
                outputs=[BranchOutput(state=r1, real=True), BranchOutput(state=r2, real=True)],
                op="cptp:postselect",
            ))
        return actions


class CollectiveIsometryStrategy(Strategy):
    """Apply one isometry to consecutive groups of k qudits; Bob gets per-wire marginals."""
    name = "collective_isometry"

    def __init__(self, op: CollectiveOp):
        super().__init__()
        if op.k > 2:
            raise UnsupportedStrategyError(f"collective isometries are limited to k <= 2, got {op.k}")
        self.op = op

    def begin(self, n_rounds: int, n_branches: int, rng: np.random.Generator) -> None:
        if n_branches != 2:
            raise UnsupportedStrategyError("collective isometry covers exactly 2 branches")
        super().begin(n_rounds, n_branches, rng)

    def act(self, states: List[PureState]) -> List[RoundAction]:
        d, k = self.op.d, self.op.k
        actions = []
        for start in range(0, len(states), k):
            group = list(states[start:start + k])
            real = len(group)
            while len(group) < k:
                group.append(qc.haar_state(d, self.rng))
            amps = reduce(np.kron, [p.amps for p in group])
            out = self.op.apply(amps[:, None])[..., 0]
            for p in range(real):
                outputs = [
                    BranchOutput(state=_hermitian_density(_reduced(out, self.op.site_wires[s][p])), real=True)
                    for s in range(2)
                ]
                actions.append(RoundAction(outputs=outputs, op=f"cptp:{self.op.name}"))
        return actions


# ---------- registry


_PARAMS: Dict[str, Type[BaseModel]] = {
    "honest": HonestParams,
    "cloner": ClonerParams,
    "split": SplitParams,
    "teleport_postselect": PostselectParams,
    "collective_isometry": CollectiveParams,
}

STRATEGY_NAMES = tuple(_PARAMS)


def build_strategy(name: str, params: Optional[dict], d: int) -> Strategy:
    """Instantiate a strategy from its spec name and parameter table."""
    if name not in _PARAMS:
        raise ConfigError(f"unknown strategy {name!r}", [f"known strategies: {', '.join(STRATEGY_NAMES)}"])
    try:
        p = _PARAMS[name].model_validate(params or {})
    except ValidationError as e:
        raise ConfigError(
            f"invalid parameters for strategy {name!r}",
            [f"{'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in e.errors()],
        ) from e
    if name == "honest":
        return HonestStrategy(p.branch)
    if name == "cloner":
        return ClonerStrategy()
    if name == "split":
        return SplitStrategy(p.fraction, p.fractions)
    if name == "teleport_postselect":
        return TeleportPostselectStrategy(build_op(p.op, d, p.k, p.op_seed), p.pattern, p.acceptance_floor)
    return CollectiveIsometryStrategy(build_op(p.op, d, p.k, p.op_seed))
