"""Weakly interacting spin systems: construction, validation, restriction,
extension, and locally-defected variants.

A system is a sum of gapped on-site terms (unique ground vector at energy 0,
next level at least g) plus Hermitian interaction terms, each indexed by a
center site and supported on the in-lattice l1 ball of radius R around it.
Interaction strength is always recomputed from the term norms, never trusted
from input metadata.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .lattice import Site, SiteSet, ball, set_distance
from .operators import (
    EmbeddedOperator,
    LocalOperator,
    embed_sum,
    operator_norm,
    pauli,
    resolve_site_dims,
    single_site_operator,
)

ONSITE_GROUND_TOL = 1e-10


@dataclass(frozen=True)
class OnSiteTerm:
    site: Site
    h: LocalOperator
    gap: float
    ground_vector: np.ndarray


@dataclass(frozen=True)
class InteractionTerm:
    center: Site
    phi: LocalOperator


@dataclass(frozen=True)
class Perturbation:
    """Hermitian operator on a non-empty support region X."""

    op: LocalOperator

    def __post_init__(self):
        if len(self.op.support) == 0:
            raise ValidationError("perturbation support must be non-empty")
        self.op.require_hermitian()

    @property
    def support(self) -> SiteSet:
        return self.op.support

    def norm(self) -> float:
        return operator_norm(self.op)


@dataclass(frozen=True)
class SpinSystem:
    lam: SiteSet
    onsite: tuple[OnSiteTerm, ...]
    interactions: tuple[InteractionTerm, ...]
    interaction_range: int
    gap: float
    strength: float

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(t.h.matrix.shape[0] for t in self.onsite)

    def site_dims(self) -> dict[Site, int]:
        return {t.site: t.h.matrix.shape[0] for t in self.onsite}

    def product_ground_vector(self) -> np.ndarray:
        """Tensor product of the on-site ground vectors, in canonical order."""
        vec = np.array([1.0 + 0.0j])
        for term in self.onsite:
            vec = np.kron(vec, term.ground_vector)
        return vec


def validate_onsite_matrix(matrix: np.ndarray, gap: float, tol: float = ONSITE_GROUND_TOL) -> np.ndarray:
    """Check a candidate on-site Hamiltonian and return its ground vector.

    Requires: Hermitian, positive semi-definite with lowest eigenvalue 0,
    non-degenerate ground state, second eigenvalue at least ``gap``.
    """
    mat = np.asarray(matrix, dtype=np.complex128)
    if mat.shape[0] != mat.shape[1]:
        raise ValidationError("on-site matrix must be square")
    if np.max(np.abs(mat - mat.conj().T), initial=0.0) > 1e-12:
        raise ValidationError("on-site matrix is not Hermitian")
    if gap <= 0:
        raise ValidationError(f"on-site gap must be positive, got {gap}")
    evals, evecs = np.linalg.eigh(mat)
    if evals[0] < -tol or abs(evals[0]) > tol:
        raise ValidationError(f"lowest on-site eigenvalue must be 0, got {evals[0]:.3e}")
    if mat.shape[0] < 2:
        raise ValidationError("on-site space must have dimension >= 2 to carry a gap")
    if evals[1] < gap - tol:
        raise ValidationError(f"on-site gap violation: second eigenvalue {evals[1]:.6g} < g={gap}")
    ground = np.ascontiguousarray(evecs[:, 0])
    if np.linalg.norm(mat @ ground) > tol * max(1.0, float(np.linalg.norm(mat, 2))):
        raise ValidationError("on-site ground vector is not annihilated within tolerance")
    return ground


def gapped_projector_onsite(gap: float, ground=None, dim: int = 2) -> np.ndarray:
    """The minimal gapped on-site term g (1 - |psi><psi|)."""
    if ground is None:
        ground = np.zeros(dim, dtype=np.complex128)
        ground[0] = 1.0
    psi = np.asarray(ground, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    return gap * (np.eye(len(psi), dtype=np.complex128) - np.outer(psi, psi.conj()))


def uniform_onsite(lam: SiteSet, gap: float, ground=None, dim: int = 2) -> dict[Site, LocalOperator]:
    mat = gapped_projector_onsite(gap, ground, dim)
    return {site: single_site_operator(site, mat) for site in lam.sites}


def build_system(
    lam: SiteSet,
    onsite: Mapping[Site, LocalOperator],
    interactions: Sequence[InteractionTerm],
    interaction_range: int,
    gap: float,
) -> SpinSystem:
    """Validate all terms and assemble the system record.

    Raises ValidationError on: missing/extra on-site terms, gap violations,
    degenerate on-site ground states, non-Hermitian terms, or interaction
    supports escaping the R-ball around their center.
    """
    if interaction_range < 1:
        raise ValidationError(f"interaction range must be >= 1, got {interaction_range}")
    if set(onsite.keys()) != set(lam.sites):
        missing = set(lam.sites) - set(onsite.keys())
        extra = set(onsite.keys()) - set(lam.sites)
        raise ValidationError(f"on-site terms must cover lam exactly (missing {missing}, extra {extra})")

    onsite_terms = []
    for site in lam.sites:
        op = onsite[site]
        if tuple(op.support.sites) != (site,):
            raise ValidationError(f"on-site term at {site} must be supported on that site only")
        ground = validate_onsite_matrix(op.matrix, gap)
        onsite_terms.append(OnSiteTerm(site=site, h=op, gap=gap, ground_vector=ground))

    dims_by_site = {t.site: t.h.matrix.shape[0] for t in onsite_terms}
    interaction_terms = []
    norms = [0.0]
    for term in interactions:
        if term.center not in lam:
            raise ValidationError(f"interaction center {term.center} not in lam")
        allowed = ball(term.center, interaction_range, lam)
        if not term.phi.support.is_subset(allowed):
            raise ValidationError(
                f"interaction centered at {term.center} has support outside its R-ball"
            )
        term.phi.require_hermitian()
        for site, d in zip(term.phi.support.sites, term.phi.site_dims):
            if dims_by_site[site] != d:
                raise ValidationError(f"interaction dimension mismatch at site {site}")
        interaction_terms.append(term)
        norms.append(operator_norm(term.phi))

    return SpinSystem(
        lam=lam,
        onsite=tuple(onsite_terms),
        interactions=tuple(interaction_terms),
        interaction_range=interaction_range,
        gap=gap,
        strength=max(norms),
    )


def xx_chain_interactions(lam: SiteSet, strength: float) -> list[InteractionTerm]:
    """Nearest-neighbor strength * sigma_x sigma_x couplings on a 1d chain,
    centered at the left site of each pair."""
    if lam.nu != 1:
        raise ValidationError("xx_chain interactions require a 1d lattice")
    coupling = strength * np.kron(pauli("x"), pauli("x"))
    terms = []
    for (x,) in lam.sites:
        right = (x + 1,)
        if right in lam:
            support = SiteSet.from_sites([(x,), right])
            terms.append(InteractionTerm(center=(x,), phi=LocalOperator(support, coupling, (2, 2))))
    return terms


def random_ball_interactions(
    lam: SiteSet,
    interaction_range: int,
    strength: float,
    rng: np.random.Generator,
    min_fraction: float = 0.3,
) -> list[InteractionTerm]:
    """One random Hermitian term per center, supported on its in-lattice
    R-ball, with operator norm strength * u, u uniform in [min_fraction, 1]."""
    from .operators import random_local_operator

    terms = []
    for center in lam.sites:
        support = ball(center, interaction_range, lam)
        scale = strength * rng.uniform(min_fraction, 1.0)
        phi = random_local_operator(support, rng, hermitian=True, norm=scale)
        terms.append(InteractionTerm(center=center, phi=phi))
    return terms


def assemble(
    system: SpinSystem,
    perturbation: Perturbation | None = None,
    lam: SiteSet | None = None,
    site_dims=None,
) -> EmbeddedOperator:
    """Matrix-free applier for H (or H + P), Hermitian by construction.

    ``lam`` may be a superset of the system's lattice, in which case the
    system acts as itself tensor identity (used by bulk-restriction tests).
    """
    target = system.lam if lam is None else lam
    if lam is None:
        dims = system.dims
    else:
        if not system.lam.is_subset(lam):
            raise ValidationError("system lattice is not contained in the target site set")
        merged = dict(system.site_dims())
        if site_dims is not None:
            base = resolve_site_dims(lam, site_dims)
            for site, d in zip(lam.sites, base):
                merged.setdefault(site, d)
        dims = tuple(merged.get(s, 2) for s in lam.sites)
    ops: list[LocalOperator] = [t.h for t in system.onsite] + [t.phi for t in system.interactions]
    if perturbation is not None:
        if not perturbation.support.is_subset(target):
            raise ValidationError("perturbation support not contained in the system lattice")
        ops.append(perturbation.op)
    return embed_sum(ops, target, dims)


def restrict(system: SpinSystem, lam_star: SiteSet) -> SpinSystem:
    """Canonical restriction: keep all on-site terms on lam_star and exactly
    the interactions whose center is at distance > R from lam minus lam_star."""
    if not lam_star.is_subset(system.lam):
        raise ValidationError("lam_star must be a subset of the system lattice")
    removed = system.lam.difference(lam_star)
    kept = []
    for term in system.interactions:
        if term.center not in lam_star:
            continue
        center_set = SiteSet.from_sites([term.center])
        if set_distance(center_set, removed) > system.interaction_range:
            kept.append(term)
    onsite = {t.site: t.h for t in system.onsite if t.site in lam_star}
    return build_system(lam_star, onsite, kept, system.interaction_range, system.gap)


def extend_system(
    system: SpinSystem,
    omega: SiteSet,
    extension_onsite: Mapping[Site, LocalOperator],
) -> SpinSystem:
    """Extend to omega by adding gapped on-site terms on omega minus lam.

    No interactions are added on the new sites, so the extension's ground
    sector factorizes over the added sites.
    """
    if not system.lam.is_subset(omega):
        raise ValidationError("omega must contain the system lattice")
    new_sites = omega.difference(system.lam)
    missing = [s for s in new_sites.sites if s not in extension_onsite]
    if missing:
        raise ValidationError(f"extension on-site terms missing for sites {missing}")
    onsite = {t.site: t.h for t in system.onsite}
    for site in new_sites.sites:
        onsite[site] = extension_onsite[site]
    return build_system(omega, onsite, list(system.interactions), system.interaction_range, system.gap)


@dataclass(frozen=True)
class LocallyWeakSystem:
    """A weakly interacting system tilde_H plus a defect Q acting outside the
    protected region, i.e. H = tilde_H + identity-on-region tensor Q."""

    tilde: SpinSystem
    defect: LocalOperator
    region: SiteSet

    @property
    def lam(self) -> SiteSet:
        return self.tilde.lam

    @property
    def dims(self) -> tuple[int, ...]:
        return self.tilde.dims


def build_locally_weak_system(tilde: SpinSystem, region: SiteSet, defect: LocalOperator) -> LocallyWeakSystem:
    if not region.is_subset(tilde.lam):
        raise ValidationError("region must be a subset of the system lattice")
    if len(defect.support.intersection(region)) > 0:
        raise ValidationError("defect support must not intersect the protected region")
    if not defect.support.is_subset(tilde.lam):
        raise ValidationError("defect support must lie inside the system lattice")
    defect.require_hermitian()
    return LocallyWeakSystem(tilde=tilde, defect=defect, region=region)


def assemble_defected(lw: LocallyWeakSystem, perturbation: Perturbation | None = None) -> EmbeddedOperator:
    """Matrix-free applier for H = tilde_H + Q (+ P)."""
    ops: list[LocalOperator] = [t.h for t in lw.tilde.onsite] + [t.phi for t in lw.tilde.interactions]
    ops.append(lw.defect)
    if perturbation is not None:
        if not perturbation.support.is_subset(lw.lam):
            raise ValidationError("perturbation support not contained in the system lattice")
        ops.append(perturbation.op)
    return embed_sum(ops, lw.lam, lw.dims)


def pauli_perturbation(site, axis: str, scale: float) -> Perturbation:
    return Perturbation(single_site_operator(site, scale * pauli(axis)))


def matrix_perturbation(support: SiteSet, matrix, site_dims=None) -> Perturbation:
    return Perturbation(LocalOperator.create(support, matrix, site_dims, hermitian=True))
