import itertools
import math

import numpy as np
import pytest

from lppllab.errors import ValidationError
from lppllab.eigen import dense_eigenpairs, ground_space
from lppllab.experiments import chain_system
from lppllab.lattice import SiteSet
from lppllab.operators import embed, pauli, random_local_operator, single_site_operator
from lppllab.states import (
    DensityState,
    bulk_ground_state_test,
    ground_state_commutator_test,
    observable_discrepancy,
    partial_trace,
    trace_distance_on,
)
from lppllab.system import assemble, pauli_perturbation, restrict


def random_pure_state(rng, lam, dims):
    dim = int(np.prod(dims))
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return DensityState.pure(vec, lam, dims)


def partial_trace_oracle(rho_dense, lam, dims, keep):
    """Brute-force index contraction over the traced-out sites."""
    keep_pos = [lam.index_of(s) for s in keep.sites]
    rest_pos = [i for i in range(len(lam)) if i not in keep_pos]
    keep_dims = [dims[i] for i in keep_pos]
    rest_dims = [dims[i] for i in rest_pos]
    dim_keep = int(np.prod(keep_dims)) if keep_dims else 1
    out = np.zeros((dim_keep, dim_keep), dtype=np.complex128)

    def full_index(keep_digits, rest_digits):
        digits = [0] * len(lam)
        for pos, dig in zip(keep_pos, keep_digits):
            digits[pos] = dig
        for pos, dig in zip(rest_pos, rest_digits):
            digits[pos] = dig
        idx = 0
        for pos, dig in enumerate(digits):
            idx = idx * dims[pos] + dig
        return idx

    keep_space = list(itertools.product(*(range(d) for d in keep_dims))) or [()]
    rest_space = list(itertools.product(*(range(d) for d in rest_dims))) or [()]
    for i, row in enumerate(keep_space):
        for j, col in enumerate(keep_space):
            for rest in rest_space:
                out[i, j] += rho_dense[full_index(row, rest), full_index(col, rest)]
    return out


def test_partial_trace_product_state():
    system = chain_system(n=3, s=0.0)
    rho = DensityState.pure(system.product_ground_vector(), system.lam, system.dims)
    reduced = partial_trace(rho, SiteSet.from_sites([(1,)]))
    assert np.allclose(reduced, np.diag([1.0, 0.0]))


def test_partial_trace_maximally_entangled():
    lam = SiteSet.from_box([[0, 1]])
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2)
    rho = DensityState.pure(bell, lam, (2, 2))
    reduced = partial_trace(rho, SiteSet.from_sites([(0,)]))
    assert np.allclose(reduced, np.eye(2) / 2)


def test_partial_trace_against_index_contraction():
    rng = np.random.default_rng(51)
    lam = SiteSet.from_box([[0, 3]])
    dims = (2, 2, 2, 2)
    for _ in range(15):
        rho = random_pure_state(rng, lam, dims)
        size = int(rng.integers(1, 4))
        keep_sites = sorted(rng.choice(4, size=size, replace=False).tolist())
        keep = SiteSet.from_sites([(s,) for s in keep_sites])
        got = partial_trace(rho, keep)
        expected = partial_trace_oracle(rho.dense(), lam, dims, keep)
        assert np.max(np.abs(got - expected)) < 1e-12
        evals = np.linalg.eigvalsh(got)
        assert evals.min() > -1e-11
        assert abs(np.trace(got) - 1.0) < 1e-10


def test_observable_discrepancy_basics():
    rng = np.random.default_rng(53)
    lam = SiteSet.from_box([[0, 2]])
    dims = (2, 2, 2)
    rho = random_pure_state(rng, lam, dims)
    a = single_site_operator((1,), pauli("z"))
    assert observable_discrepancy(rho, rho, a) == 0.0
    rho2 = random_pure_state(rng, lam, dims)
    ident = single_site_operator((1,), np.eye(2))
    assert observable_discrepancy(rho, rho2, ident) < 1e-12  # both traces are 1


def test_observable_discrepancy_against_full_space():
    rng = np.random.default_rng(57)
    lam = SiteSet.from_box([[0, 2]])
    dims = (2, 2, 2)
    for _ in range(15):
        rho1 = random_pure_state(rng, lam, dims)
        rho2 = random_pure_state(rng, lam, dims)
        support = SiteSet.from_sites([(0,), (1,)])
        a = random_local_operator(support, rng, hermitian=False, norm=None)
        got = observable_discrepancy(rho1, rho2, a)
        a_full = embed(a, lam).dense()
        expected = abs(np.trace((rho1.dense() - rho2.dense()) @ a_full))
        assert abs(got - expected) < 1e-11


def test_trace_distance_basics():
    lam = SiteSet.from_sites([(0,)])
    up = DensityState.pure(np.array([1.0, 0.0]), lam, (2,))
    dn = DensityState.pure(np.array([0.0, 1.0]), lam, (2,))
    assert trace_distance_on(up, up, lam) < 1e-14
    assert abs(trace_distance_on(up, dn, lam) - 2.0) < 1e-12


def test_trace_distance_dominates_normalized_observables():
    rng = np.random.default_rng(59)
    lam = SiteSet.from_box([[0, 2]])
    dims = (2, 2, 2)
    rho1 = random_pure_state(rng, lam, dims)
    rho2 = random_pure_state(rng, lam, dims)
    support = SiteSet.from_sites([(0,), (1,)])
    td = trace_distance_on(rho1, rho2, support)
    for _ in range(100):
        a = random_local_operator(support, rng, hermitian=bool(rng.integers(2)), norm=1.0)
        assert observable_discrepancy(rho1, rho2, a) <= td + 1e-10


def test_trace_distance_monotone_under_restriction():
    rng = np.random.default_rng(61)
    lam = SiteSet.from_box([[0, 3]])
    dims = (2, 2, 2, 2)
    for _ in range(10):
        rho1 = random_pure_state(rng, lam, dims)
        rho2 = random_pure_state(rng, lam, dims)
        big = SiteSet.from_sites([(0,), (1,), (2,)])
        small = SiteSet.from_sites([(0,), (2,)])
        assert trace_distance_on(rho1, rho2, small) <= trace_distance_on(rho1, rho2, big) + 1e-10


def test_density_state_validation():
    lam = SiteSet.from_sites([(0,)])
    with pytest.raises(ValidationError):
        DensityState(lam, (2,), np.array([0.5, 0.5]), np.array([[1.0, 0.0], [1.0, 0.0]], dtype=complex))
    with pytest.raises(ValidationError):
        DensityState(lam, (2,), np.array([2.0]), np.array([[1.0, 0.0]], dtype=complex))


def test_from_dense_roundtrip():
    rng = np.random.default_rng(63)
    lam = SiteSet.from_box([[0, 1]])
    vecs = np.linalg.qr(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)))[0].T
    rho = DensityState.mixture([0.75, 0.25], vecs, lam, (2, 2))
    back = DensityState.from_dense(rho.dense(), lam, (2, 2))
    assert np.max(np.abs(back.dense() - rho.dense())) < 1e-12


def test_commutator_hand_values():
    # K = diag(0,1): rho = |0><0| with A = |1><0| gives m = +1;
    # rho = |1><1| with A = |0><1| gives m = -1
    lam = SiteSet.from_sites([(0,)])
    h_op = embed(single_site_operator((0,), np.diag([0.0, 1.0])), lam)
    from lppllab.states import _CommutatorEvaluator

    rho0 = DensityState.pure(np.array([1.0, 0.0]), lam, (2,))
    a_raise = single_site_operator((0,), np.array([[0.0, 0.0], [1.0, 0.0]]))
    ev = _CommutatorEvaluator(rho0, h_op, dense_cap=16)
    assert abs(ev.m_local(a_raise) - 1.0) < 1e-14

    rho1 = DensityState.pure(np.array([0.0, 1.0]), lam, (2,))
    a_lower = single_site_operator((0,), np.array([[0.0, 1.0], [0.0, 0.0]]))
    ev1 = _CommutatorEvaluator(rho1, h_op, dense_cap=16)
    assert abs(ev1.m_local(a_lower) + 1.0) < 1e-14


def test_ground_state_passes_battery():
    system = chain_system(n=5, s=0.15)
    h_op = assemble(system)
    dense = dense_eigenpairs(h_op, k=1)
    rho = DensityState.pure(dense.vectors[0], system.lam, system.dims)
    report = ground_state_commutator_test(rho, h_op, trials=120, seed=3, adversarial_restarts=40)
    assert report.passed
    assert report.min_value >= -1e-9
    assert report.max_abs_imag < 1e-9


def test_excited_state_fails_battery():
    system = chain_system(n=4, s=0.1)
    h_op = assemble(system)
    dense = dense_eigenpairs(h_op, k=16)
    rho = DensityState.pure(dense.vectors[3], system.lam, system.dims)
    report = ground_state_commutator_test(rho, h_op, trials=50, seed=4, stop_below=-1e-6)
    assert not report.passed
    assert report.min_value < -1e-6
    assert report.witness is not None


def test_krylov_ground_state_passes_battery():
    system = chain_system(n=6, s=0.1)
    h_op = assemble(system)
    gs = ground_space(h_op, k=2, tol=1e-10, seed=5)
    rho = DensityState.pure(gs.basis[0], system.lam, system.dims)
    report = ground_state_commutator_test(rho, h_op, trials=200, seed=6, adversarial_restarts=30)
    assert report.passed


def test_degenerate_mixture_passes_battery():
    from lppllab.experiments import gap_closing_perturbation

    system = chain_system(n=4, s=0.1)
    pert = gap_closing_perturbation(system, (0,), split=0.0)
    h_op = assemble(system, pert)
    gs = ground_space(h_op, k=4, tol=1e-11, seed=7)
    assert gs.dimension == 2
    for rho in (
        DensityState.pure(gs.basis[0], system.lam, system.dims),
        DensityState.pure(gs.basis[1], system.lam, system.dims),
        DensityState.uniform_mixture(gs.basis, system.lam, system.dims),
    ):
        report = ground_state_commutator_test(rho, h_op, trials=60, seed=8, adversarial_restarts=20)
        assert report.passed, report.min_value


def test_bulk_test_certifies_perturbed_ground_states():
    # ground states of H + P (P at the edge) are bulk ground states of the
    # canonical restriction to the complement of the perturbed region
    system = chain_system(n=8, s=0.1)
    pert = pauli_perturbation((7,), "x", 2.0)
    gs = ground_space(assemble(system, pert), k=2, tol=1e-10, seed=9)
    rho = DensityState.pure(gs.basis[0], system.lam, system.dims)
    lam_star = system.lam.difference(SiteSet.from_sites([(7,)]))
    restricted = restrict(system, lam_star)
    report = bulk_ground_state_test(rho, restricted, trials=100, seed=10, adversarial_restarts=30)
    assert report.passed
    assert report.min_value >= -1e-9

    # unperturbed ground state passes as well (Q = 0 case)
    gs0 = ground_space(assemble(system), k=2, tol=1e-10, seed=11)
    rho0 = DensityState.pure(gs0.basis[0], system.lam, system.dims)
    report0 = bulk_ground_state_test(rho0, restricted, trials=100, seed=12, adversarial_restarts=30)
    assert report0.passed


def test_bulk_test_refutes_generic_excited_state():
    system = chain_system(n=6, s=0.1)
    h_op = assemble(system)
    dense = dense_eigenpairs(h_op, k=8)
    rho_exc = DensityState.pure(dense.vectors[5], system.lam, system.dims)
    lam_star = system.lam.difference(SiteSet.from_sites([(5,)]))
    restricted = restrict(system, lam_star)
    report = bulk_ground_state_test(
        rho_exc, restricted, trials=150, seed=13, adversarial_restarts=150, stop_below=-1e-6
    )
    assert not report.passed


def test_bulk_test_rejects_empty_bulk():
    system = chain_system(n=4, s=0.1)
    restricted = restrict(system, SiteSet.from_box([[0, 1]]))
    gs = ground_space(assemble(system), k=2, seed=1)
    rho = DensityState.pure(gs.basis[0], system.lam, system.dims)
    with pytest.raises(ValidationError):
        bulk_ground_state_test(rho, restricted)
