import math

import numpy as np
import pytest

from lppllab.errors import ValidationError
from lppllab.lattice import SiteSet
from lppllab.operators import LocalOperator, pauli, single_site_operator
from lppllab.system import (
    InteractionTerm,
    Perturbation,
    assemble,
    assemble_defected,
    build_locally_weak_system,
    build_system,
    extend_system,
    gapped_projector_onsite,
    pauli_perturbation,
    random_ball_interactions,
    restrict,
    uniform_onsite,
    xx_chain_interactions,
)
from lppllab.experiments import chain_system
from lppllab.states import DensityState, extend_state, partial_trace


def test_build_preset_chain():
    sys2 = chain_system(n=2, s=0.1)
    assert abs(sys2.strength - 0.1) < 1e-12
    assert sys2.gap == 1.0
    assert len(sys2.interactions) == 1


def test_build_rejects_range_violation():
    lam = SiteSet.from_box([[0, 3]])
    onsite = uniform_onsite(lam, 1.0)
    # coupling (0, 2) centered at 0 escapes the R=1 ball
    support = SiteSet.from_sites([(0,), (2,)])
    phi = LocalOperator(support, 0.1 * np.kron(pauli("x"), pauli("x")), (2, 2))
    with pytest.raises(ValidationError):
        build_system(lam, onsite, [InteractionTerm((0,), phi)], 1, 1.0)


def test_build_rejects_degenerate_onsite():
    lam = SiteSet.from_box([[0, 1]])
    h = np.diag([0.0, 0.0, 1.0])  # doubly degenerate ground level
    onsite = {site: single_site_operator(site, h) for site in lam.sites}
    with pytest.raises(ValidationError):
        build_system(lam, onsite, [], 1, 1.0)


def test_build_rejects_gap_violation():
    lam = SiteSet.from_box([[0, 1]])
    h = np.diag([0.0, 0.5])
    onsite = {site: single_site_operator(site, h) for site in lam.sites}
    with pytest.raises(ValidationError):
        build_system(lam, onsite, [], 1, 1.0)
    build_system(lam, onsite, [], 1, 0.5)  # consistent gap passes


def test_build_rejects_non_hermitian_interaction():
    lam = SiteSet.from_box([[0, 1]])
    onsite = uniform_onsite(lam, 1.0)
    phi = LocalOperator(lam, np.triu(np.ones((4, 4))), (2, 2))
    with pytest.raises(ValidationError):
        build_system(lam, onsite, [InteractionTerm((0,), phi)], 1, 1.0)


def test_assemble_closed_form_two_sites():
    # basis blocks {00, 11} and {01, 10} give energies 1 +- sqrt(1 + s^2), 1 +- s
    s = 0.1
    sys2 = chain_system(n=2, s=s)
    evals = np.linalg.eigvalsh(assemble(sys2).dense())
    expected = sorted([1 - math.sqrt(1 + s * s), 1 - s, 1 + s, 1 + math.sqrt(1 + s * s)])
    assert np.allclose(evals, expected, atol=1e-12)


def test_assemble_free_system_product_ground_state():
    lam = SiteSet.from_box([[0, 3]])
    system = build_system(lam, uniform_onsite(lam, 1.0), [], 1, 1.0)
    h_op = assemble(system)
    product = system.product_ground_vector()
    assert np.linalg.norm(h_op.apply(product)) < 1e-12
    evals = np.linalg.eigvalsh(h_op.dense())
    assert abs(evals[0]) < 1e-12


def test_assemble_matches_dense_term_sum():
    rng = np.random.default_rng(31)
    lam = SiteSet.from_box([[0, 2]])
    onsite = uniform_onsite(lam, 1.0)
    interactions = random_ball_interactions(lam, 1, 0.2, rng)
    system = build_system(lam, onsite, interactions, 1, 1.0)
    from lppllab.operators import embed

    expected = np.zeros((8, 8), dtype=np.complex128)
    for term in system.onsite:
        expected += embed(term.h, lam).dense()
    for term in system.interactions:
        expected += embed(term.phi, lam).dense()
    assert np.max(np.abs(assemble(system).dense() - expected)) < 1e-12


def test_assemble_is_hermitian():
    rng = np.random.default_rng(37)
    sys4 = chain_system(n=4, s=0.15)
    h_op = assemble(sys4, pauli_perturbation((0,), "x", 2.0))
    for _ in range(10):
        v = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        w = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        assert abs(np.vdot(v, h_op.apply(w)) - np.conj(np.vdot(w, h_op.apply(v)))) < 1e-10


def test_restrict_keeps_interior_centers():
    sys10 = chain_system(n=10, s=0.1)
    lam_star = SiteSet.from_box([[0, 4]])
    restricted = restrict(sys10, lam_star)
    kept_centers = sorted(t.center for t in restricted.interactions)
    assert kept_centers == [(0,), (1,), (2,), (3,)]
    assert restricted.strength <= sys10.strength + 1e-15
    assert len(restricted.onsite) == 5


def test_restrict_identity_and_idempotence():
    sys6 = chain_system(n=6, s=0.1)
    same = restrict(sys6, sys6.lam)
    assert len(same.interactions) == len(sys6.interactions)
    lam_star = SiteSet.from_box([[0, 3]])
    once = restrict(sys6, lam_star)
    twice = restrict(once, lam_star)
    assert [t.center for t in once.interactions] == [t.center for t in twice.interactions]


def test_restrict_strength_never_grows():
    rng = np.random.default_rng(41)
    lam = SiteSet.from_box([[0, 6]])
    system = build_system(
        lam, uniform_onsite(lam, 1.0), random_ball_interactions(lam, 1, 0.3, rng), 1, 1.0
    )
    restricted = restrict(system, SiteSet.from_box([[0, 3]]))
    assert restricted.strength <= system.strength + 1e-12


def test_extend_system_preserves_ground_sector():
    sys2 = chain_system(n=2, s=0.1)
    omega = SiteSet.from_box([[0, 3]])
    extension = uniform_onsite(omega.difference(sys2.lam), 1.0)
    extended = extend_system(sys2, omega, extension)
    assert len(extended.interactions) == len(sys2.interactions)
    e_orig = np.linalg.eigvalsh(assemble(sys2).dense())[0]
    e_ext = np.linalg.eigvalsh(assemble(extended).dense())[0]
    assert abs(e_orig - e_ext) < 1e-12

    # reduced state of the extended ground state equals the original one
    evals, evecs = np.linalg.eigh(assemble(extended).dense())
    rho_ext = DensityState.pure(evecs[:, 0], omega, extended.dims)
    reduced = partial_trace(rho_ext, sys2.lam)
    evals2, evecs2 = np.linalg.eigh(assemble(sys2).dense())
    rho_orig = DensityState.pure(evecs2[:, 0], sys2.lam, sys2.dims).dense()
    assert np.max(np.abs(reduced - rho_orig)) < 1e-10


def test_extend_state_with_system_ground_vectors():
    from lppllab.states import extend_state_with

    sys2 = chain_system(n=2, s=0.1)
    omega = SiteSet.from_box([[0, 3]])
    extended = extend_system(sys2, omega, uniform_onsite(omega.difference(sys2.lam), 1.0))
    evals, evecs = np.linalg.eigh(assemble(sys2).dense())
    rho = DensityState.pure(evecs[:, 0], sys2.lam, sys2.dims)
    rho_ext = extend_state_with(rho, extended)
    # the extended state is a ground state of the extended Hamiltonian
    h_ext = assemble(extended)
    for w, vec in zip(rho_ext.weights, rho_ext.vectors):
        energy = float(np.real(np.vdot(vec, h_ext.apply(vec))))
        assert abs(energy - evals[0]) < 1e-10


def test_extend_state_tensor_structure():
    sys2 = chain_system(n=2, s=0.1)
    omega = SiteSet.from_box([[-1, 2]])  # new sites on both ends of the chain
    evals, evecs = np.linalg.eigh(assemble(sys2).dense())
    rho = DensityState.pure(evecs[:, 0], sys2.lam, sys2.dims)
    up = np.array([1.0, 0.0], dtype=np.complex128)
    extended = extend_state(rho, omega, {(-1,): up, (2,): up})
    assert extended.lam == omega
    reduced = partial_trace(extended, sys2.lam)
    assert np.max(np.abs(reduced - rho.dense())) < 1e-12
    corner = partial_trace(extended, SiteSet.from_sites([(-1,)]))
    assert np.max(np.abs(corner - np.outer(up, up.conj()))) < 1e-12


def test_locally_weak_system_validation():
    sys8 = chain_system(n=8, s=0.1)
    region = SiteSet.from_box([[0, 4]])
    q_good = LocalOperator(
        SiteSet.from_sites([(6,), (7,)]), np.diag([5.0, 0.0, 0.0, -5.0]).astype(complex), (2, 2)
    )
    lw = build_locally_weak_system(sys8, region, q_good)
    assert lw.region == region
    q_bad = single_site_operator((2,), 5.0 * pauli("z"))
    with pytest.raises(ValidationError):
        build_locally_weak_system(sys8, region, q_bad)


def test_locally_weak_defect_changes_only_its_factor():
    sys4 = chain_system(n=4, s=0.1)
    region = SiteSet.from_box([[0, 2]])
    q = single_site_operator((3,), 7.0 * pauli("z"))
    lw = build_locally_weak_system(sys4, region, q)
    h_tilde = assemble(sys4).dense()
    h_full = assemble_defected(lw).dense()
    from lppllab.operators import embed

    diff = h_full - h_tilde
    assert np.max(np.abs(diff - embed(q, sys4.lam).dense())) < 1e-12


def test_locally_weak_accepts_gap_closing_defect():
    # no gap assumption on the defected Hamiltonian: a large negative block
    # outside the region is accepted
    sys4 = chain_system(n=4, s=0.1)
    region = SiteSet.from_box([[0, 1]])
    q = LocalOperator(
        SiteSet.from_sites([(2,), (3,)]),
        -50.0 * np.eye(4, dtype=np.complex128),
        (2, 2),
    )
    lw = build_locally_weak_system(sys4, region, q)
    evals = np.linalg.eigvalsh(assemble_defected(lw).dense())
    assert evals[0] < -40.0


def test_locally_weak_zero_defect_is_plain_system():
    sys4 = chain_system(n=4, s=0.1)
    region = SiteSet.from_box([[0, 1]])
    q_zero = single_site_operator((3,), np.zeros((2, 2)))
    lw = build_locally_weak_system(sys4, region, q_zero)
    assert np.max(np.abs(assemble_defected(lw).dense() - assemble(sys4).dense())) < 1e-14


def test_perturbation_requires_hermitian_nonempty():
    with pytest.raises(ValidationError):
        Perturbation(single_site_operator((0,), np.array([[0.0, 1.0], [0.0, 0.0]])))


def test_chain_gap_uniformly_bounded_at_small_s():
    # gap stays bounded away from zero as the chain grows (s = 0.1 g)
    from lppllab.eigen import dense_eigenpairs

    for n in (4, 6, 8):
        h_op = assemble(chain_system(n=n, s=0.1))
        res = dense_eigenpairs(h_op, k=2)
        assert res.energies[1] - res.energies[0] > 0.7


def test_onsite_preset_matches_projector_form():
    mat = gapped_projector_onsite(2.0)
    assert np.allclose(mat, np.diag([0.0, 2.0]))
    ground = np.array([1.0, 1.0]) / math.sqrt(2)
    mat2 = gapped_projector_onsite(1.0, ground)
    assert np.allclose(mat2 @ ground, 0.0)


def test_xx_chain_requires_1d():
    lam = SiteSet.from_box([[0, 1], [0, 1]])
    with pytest.raises(ValidationError):
        xx_chain_interactions(lam, 0.1)
