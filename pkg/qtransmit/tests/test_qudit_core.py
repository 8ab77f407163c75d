"""Tests for Weyl operators, Bell measurement and state utilities."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from qtransmit.core.cache import cache_stats, clear_cache
from qtransmit.core.errors import ArgumentError
from qtransmit.core.rng import make_rng
from qtransmit.models.quantum import DensityMatrix, PureState, WeylIndex
from qtransmit.services import qudit_core as qc


def _random_mixed(d, rng, rank=3):
    vecs = [qc.haar_state(d, rng).amps for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    mat = sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vecs))
    return DensityMatrix(dim=d, mat=mat)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_weyl_table_is_an_orthogonal_unitary_basis(d):
    table = qc.weyl_table(d)
    assert table.shape == (d * d, d, d)
    gram = np.einsum("iab,jab->ij", table.conj(), table)
    assert np.allclose(gram, d * np.eye(d * d), atol=1e-12)


def test_shift_and_clock_commutation():
    d = 3
    x, z = qc.shift_clock(d)
    w = np.exp(2j * np.pi / d)
    assert np.allclose(z @ x, w * x @ z)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_bell_basis_is_orthonormal(d):
    basis = qc.bell_basis(d).reshape(d * d, d * d)
    assert np.allclose(basis @ basis.conj().T, np.eye(d * d), atol=1e-12)


def test_weyl_unitary_rejects_bad_arguments():
    with pytest.raises(ArgumentError):
        qc.weyl_unitary(2, (2, 0))
    with pytest.raises(ArgumentError):
        qc.weyl_unitary(1, (0, 0))
    with pytest.raises(ArgumentError):
        qc.weyl_unitary(3, WeylIndex(dim=2, a=0, b=1))


def test_weyl_index_flat_encoding():
    idx = WeylIndex(dim=3, a=2, b=1)
    assert idx.flat == 7
    assert WeylIndex.from_flat(7, 3) == idx


@pytest.mark.parametrize("d", [2, 3, 4, 7])
def test_weyl_twirl_gives_maximally_mixed(d):
    rng = make_rng(d)
    rho = _random_mixed(d, rng)
    twirled = qc.weyl_twirl(rho)
    assert qc.trace_distance(twirled, DensityMatrix.maximally_mixed(d)) < 1e-10


@pytest.mark.parametrize("d", [2, 3, 5])
def test_teleport_then_correct_restores_state(d):
    rng = make_rng(100 + d)
    for _ in range(10):
        psi = qc.haar_state(d, rng)
        idx, rest = qc.bell_measure(qc.tensor_with(psi, qc.bell_state(d)), d, rng)
        fixed = qc.apply_unitary_pure(rest, qc.correction_unitary(idx))
        assert qc.fidelity(fixed.projector(), psi) == pytest.approx(1.0, abs=1e-10)


def test_bell_outcomes_are_uniform_for_any_input():
    d = 3
    psi = qc.haar_state(d, make_rng(1))
    probs = qc.bell_probabilities(qc.tensor_with(psi, qc.bell_state(d)), d)
    assert np.allclose(probs, np.full(d * d, 1.0 / d ** 2))


def test_bell_measure_needs_two_qudits_on_side_a():
    d = 2
    state = qc.bell_state(d)
    with pytest.raises(ArgumentError):
        qc.bell_measure(state, d, make_rng(0))


def test_fidelity_of_basis_states():
    zero, one = PureState.basis(2, 0), PureState.basis(2, 1)
    assert qc.fidelity(zero.projector(), zero) == 1.0
    assert qc.fidelity(zero.projector(), one) == 0.0
    assert qc.fidelity(DensityMatrix.maximally_mixed(2), zero) == pytest.approx(0.5)


def test_projective_test_always_passes_on_the_reference_state():
    rng = make_rng(3)
    psi = qc.haar_state(4, rng)
    assert all(qc.projective_test(psi.projector(), psi, rng) for _ in range(200))


def test_projective_test_rate_matches_fidelity():
    rng = make_rng(4)
    rho = DensityMatrix.maximally_mixed(2)
    psi = PureState.basis(2, 0)
    hits = sum(qc.projective_test(rho, psi, rng) for _ in range(4000))
    assert hits / 4000 == pytest.approx(0.5, abs=0.05)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(min_value=0.0, max_value=1.0), seed=st.integers(0, 2**31))
def test_fidelity_is_linear_in_the_state(p, seed):
    rng = make_rng(seed)
    d = 3
    rho, sigma = _random_mixed(d, rng), _random_mixed(d, rng)
    psi = qc.haar_state(d, rng)
    mix = DensityMatrix(dim=d, mat=p * rho.mat + (1 - p) * sigma.mat)
    expected = p * qc.fidelity(rho, psi) + (1 - p) * qc.fidelity(sigma, psi)
    assert qc.fidelity(mix, psi) == pytest.approx(expected, abs=1e-10)


def test_trace_distance_of_orthogonal_states_is_one():
    a, b = PureState.basis(3, 0).projector(), PureState.basis(3, 2).projector()
    assert qc.trace_distance(a, b) == pytest.approx(1.0)
    assert qc.trace_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_partial_trace_of_product_state():
    rng = make_rng(5)
    a, b = qc.haar_state(2, rng), qc.haar_state(3, rng)
    joint = np.kron(np.outer(a.amps, a.amps.conj()), np.outer(b.amps, b.amps.conj()))
    assert np.allclose(qc.partial_trace(joint, (2, 3), 0), a.projector().mat)
    assert np.allclose(qc.partial_trace(joint, (2, 3), 1), b.projector().mat)


@pytest.mark.parametrize("d", [2, 4])
def test_bell_state_is_maximally_entangled(d):
    bell = qc.bell_state(d)
    assert np.allclose(qc.schmidt_coefficients(bell), np.full(d, 1 / np.sqrt(d)))
    rho_a, rho_b = qc.reduced_states(bell)
    assert qc.trace_distance(rho_a, DensityMatrix.maximally_mixed(d)) < 1e-12
    assert qc.trace_distance(rho_b, DensityMatrix.maximally_mixed(d)) < 1e-12


def test_density_matrix_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(dim=2, mat=[[1, 1], [0, 0]])
    with pytest.raises(ValidationError):
        DensityMatrix(dim=2, mat=[[0.7, 0], [0, 0.7]])
    with pytest.raises(ValidationError):
        DensityMatrix(dim=2, mat=[[1.5, 0], [0, -0.5]])
    with pytest.raises(ValidationError):
        PureState(dim=2, amps=[1, 1])


def test_operator_tables_are_cached_and_read_only():
    clear_cache()
    first = qc.weyl_table(3)
    second = qc.weyl_table(3)
    assert first is second
    assert not first.flags.writeable
    stats = cache_stats()
    assert stats["hits"] >= 1
    assert stats["misses"] >= 1


@pytest.mark.parametrize("d", [2, 3, 5])
def test_haar_states_are_normalized_and_reproducible(d):
    a, b = qc.haar_state(d, make_rng(3)), qc.haar_state(d, make_rng(3))
    assert np.linalg.norm(a.amps) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(a.amps, b.amps)
    rng = make_rng(4)
    mean = sum(qc.haar_state(d, rng).projector().mat for _ in range(4000)) / 4000
    # the Haar average of |psi><psi| is I/d
    assert np.allclose(mean, np.eye(d) / d, atol=0.03)
    with pytest.raises(ArgumentError):
        qc.haar_state(1, rng)
