"""Exact qudit quantum mechanics: Weyl operators, Bell basis, measurement, fidelity."""

from __future__ import annotations

from typing import Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.stats import unitary_group

from qtransmit.core.cache import cached
from qtransmit.core.errors import ArgumentError
from qtransmit.core.logs import get_logger
from qtransmit.models.quantum import (
    BipartiteState,
    DensityMatrix,
    PureState,
    Unitary,
    WeylIndex,
)

LOG = get_logger("qudit")

IndexLike = Union[WeylIndex, Tuple[int, int]]

# ---------- operator tables


def _check_dim(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ArgumentError(f"dimension must be an integer >= 2, got {d!r}")


@cached
def shift_clock(d: int) -> Tuple[np.ndarray, np.ndarray]:
    """X|j> = |j+1 mod d>, Z|j> = w^j |j> with w = exp(2 pi i / d)."""
    x = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


@cached
def weyl_table(d: int) -> np.ndarray:
    """All d^2 operators X^a Z^b stacked at flat index a*d + b."""
    x, z = shift_clock(d)
    table = np.empty((d * d, d, d), dtype=np.complex128)
    for a in range(d):
        xa = np.linalg.matrix_power(x, a)
        for b in range(d):
            table[a * d + b] = xa @ np.linalg.matrix_power(z, b)
    return table


@cached
def bell_basis(d: int) -> np.ndarray:
    """Coefficient matrices of the generalized Bell basis, flat-indexed like weyl_table.

    Phi_ab[j, k] = conj(U_ab)[k, j] / sqrt(d). With this choice a Bell outcome
    (a, b) leaves the receiver holding U_ab|psi>, so the correction is U_ab^dagger.
    """
    table = weyl_table(d)
    return np.conj(np.transpose(table, (0, 2, 1))) / np.sqrt(d)


def _as_index(d: int, idx: IndexLike) -> WeylIndex:
    if isinstance(idx, WeylIndex):
        if idx.dim != d:
            raise ArgumentError(f"Weyl index built for d={idx.dim}, used with d={d}")
        return idx
    try:
        a, b = idx
        return WeylIndex(dim=d, a=int(a), b=int(b))
    except (ValidationError, TypeError, ValueError) as e:
        raise ArgumentError(f"invalid Weyl index {idx!r} for d={d}: {e}") from e


def weyl_unitary(d: int, idx: IndexLike) -> Unitary:
    _check_dim(d)
    w = _as_index(d, idx)
    return Unitary.trusted(dim=d, mat=weyl_table(d)[w.flat].copy())


def correction_unitary(idx: WeylIndex) -> Unitary:
    """The receiver-side correction for teleportation outcome `idx`."""
    return weyl_unitary(idx.dim, idx).dagger


def random_weyl_index(d: int, rng: np.random.Generator) -> WeylIndex:
    return WeylIndex.from_flat(int(rng.integers(d * d)), d)


# ---------- states


def haar_state(d: int, rng: np.random.Generator) -> PureState:
    _check_dim(d)
    # first column of a Haar unitary
    v = unitary_group.rvs(d, random_state=rng)[:, 0]
    return PureState.trusted(dim=d, amps=np.ascontiguousarray(v, dtype=np.complex128))


def apply_unitary(rho: DensityMatrix, u: Unitary) -> DensityMatrix:
    if rho.dim != u.dim:
        raise ArgumentError(f"dimension mismatch: state d={rho.dim}, unitary d={u.dim}")
    return DensityMatrix.trusted(dim=rho.dim, mat=u.mat @ rho.mat @ u.mat.conj().T)


def apply_unitary_pure(psi: PureState, u: Unitary) -> PureState:
    if psi.dim != u.dim:
        raise ArgumentError(f"dimension mismatch: state d={psi.dim}, unitary d={u.dim}")
    return PureState.trusted(dim=psi.dim, amps=u.mat @ psi.amps)


def weyl_twirl(rho: DensityMatrix) -> DensityMatrix:
    """(1/d^2) sum_i U_i rho U_i^dagger, which is I/d for every input."""
    table = weyl_table(rho.dim)
    mat = np.einsum("nij,jk,nlk->il", table, rho.mat, table.conj()) / rho.dim ** 2
    return DensityMatrix.trusted(dim=rho.dim, mat=mat)


def bell_state(d: int) -> BipartiteState:
    """(1/sqrt d) sum_i |i>|i>."""
    _check_dim(d)
    return BipartiteState.trusted(
        dim_a=d, dim_b=d, amps=(np.eye(d, dtype=np.complex128) / np.sqrt(d)).reshape(-1)
    )


def tensor_with(psi: PureState, resource: BipartiteState) -> BipartiteState:
    """psi on qudit 1 next to a resource on qudits (2, 3), grouped as (12)|(3)."""
    if resource.dim_a != psi.dim:
        raise ArgumentError(f"resource sender side has d={resource.dim_a}, state has d={psi.dim}")
    return BipartiteState.trusted(
        dim_a=psi.dim * resource.dim_a,
        dim_b=resource.dim_b,
        amps=np.kron(psi.amps, resource.amps),
    )


def _bell_amplitudes(joint: BipartiteState, d: int) -> np.ndarray:
    _check_dim(d)
    if joint.dim_a != d * d:
        raise ArgumentError(
            f"Bell measurement needs two d={d} qudits on side A (dim {d * d}), got dim {joint.dim_a}"
        )
    basis = bell_basis(d).reshape(d * d, d * d)
    return basis.conj() @ joint.as_matrix()


def bell_probabilities(joint: BipartiteState, d: int) -> np.ndarray:
    """Born-rule distribution of Bell outcomes on qudits (1, 2), flat-indexed."""
    amps = _bell_amplitudes(joint, d)
    return np.sum(np.abs(amps) ** 2, axis=1).real


def bell_measure(
    joint: BipartiteState, d: int, rng: np.random.Generator
) -> Tuple[WeylIndex, PureState]:
    """Generalized Bell measurement on qudits (1, 2); returns outcome and collapsed rest."""
    amps = _bell_amplitudes(joint, d)
    if joint.dim_b < 2:
        raise ArgumentError("Bell measurement needs a remaining subsystem of dimension >= 2")
    probs = np.sum(np.abs(amps) ** 2, axis=1).real
    probs = probs / probs.sum()
    flat = int(rng.choice(d * d, p=probs))
    rest = amps[flat] / np.linalg.norm(amps[flat])
    LOG.debug("[qudit] Bell outcome %d (p=%.4f)", flat, probs[flat])
    return WeylIndex.from_flat(flat, d), PureState.trusted(dim=joint.dim_b, amps=rest)


# ---------- figures of merit


def fidelity(rho: DensityMatrix, psi: PureState) -> float:
    """<psi|rho|psi>."""
    if rho.dim != psi.dim:
        raise ArgumentError(f"dimension mismatch: state d={rho.dim}, reference d={psi.dim}")
    value = np.vdot(psi.amps, rho.mat @ psi.amps)
    if abs(value.imag) > 1e-12:
        raise ArgumentError(f"fidelity has imaginary residue {value.imag!r}")
    return float(min(1.0, max(0.0, value.real)))


def projective_test(rho: DensityMatrix, psi: PureState, rng: np.random.Generator) -> bool:
    """Two-outcome measurement {|psi><psi|, I - |psi><psi|}; True on the first outcome."""
    return bool(rng.random() < fidelity(rho, psi))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dim != sigma.dim:
        raise ArgumentError("dimension mismatch")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho.mat - sigma.mat))))


def partial_trace(mat: np.ndarray, dims: Tuple[int, ...], keep: int) -> np.ndarray:
    """Reduced operator of subsystem `keep` from an operator on prod(dims)."""
    n = len(dims)
    t = mat.reshape(dims + dims)
    # move the kept pair of axes to the front, trace the rest
    order = [keep, keep + n] + [i for i in range(n) if i != keep] + [i + n for i in range(n) if i != keep]
    t = np.transpose(t, order)
    rest = int(np.prod([dims[i] for i in range(n) if i != keep]))
    t = t.reshape(dims[keep], dims[keep], rest, rest)
    return np.einsum("ijkk->ij", t)


def reduced_states(state: BipartiteState) -> Tuple[DensityMatrix, DensityMatrix]:
    c = state.as_matrix()
    rho_a = c @ c.conj().T
    rho_b = c.T @ c.conj()
    return (
        DensityMatrix(dim=state.dim_a, mat=rho_a),
        DensityMatrix(dim=state.dim_b, mat=rho_b),
    )


def schmidt_coefficients(state: BipartiteState) -> np.ndarray:
    return np.linalg.svd(state.as_matrix(), compute_uv=False)


def depolarize(rho: DensityMatrix) -> DensityMatrix:
    return DensityMatrix.maximally_mixed(rho.dim)
