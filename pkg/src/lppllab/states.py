"""Density states, reduced density matrices, and ground-state certification.

States are stored as low-rank mixtures (weights plus orthonormal vectors);
pure states and small dense matrices are special cases.  The worst-case
observable discrepancy between two states on a region is computed exactly as
the trace norm of the reduced difference, which is the supremum of
|tr((rho1 - rho2) A)| over operators A on that region with norm at most one.

`ground_state_commutator_test` certifies the commutator characterization of
ground states: tr(A* [H, A] rho) >= 0 for all operators A.  The battery mixes
random local operators (Hermitian and not), closed-form hopping operators
between eigenvectors when a dense diagonalization is affordable, and a
derivative-free adversarial search over entries of A on a small support.
`bulk_ground_state_test` is the same certification with A restricted to the
bulk of a restricted Hamiltonian.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .lattice import SiteSet, bulk, l1_distance
from .operators import (
    DENSE_CAP,
    EmbeddedOperator,
    LocalOperator,
    hermitize,
    operator_norm,
)

STATE_TRACE_TOL = 1e-10
BATTERY_TOL = 1e-9


@dataclass
class DensityState:
    """Positive unit-trace operator stored as a low-rank mixture."""

    lam: SiteSet
    dims: tuple[int, ...]
    weights: np.ndarray  # (r,)
    vectors: np.ndarray  # (r, dim), orthonormal rows

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.vectors = np.asarray(self.vectors, dtype=np.complex128)
        dim = math.prod(self.dims)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != dim:
            raise ValidationError(f"vectors of shape {self.vectors.shape} do not match dimension {dim}")
        if self.weights.shape != (self.vectors.shape[0],):
            raise ValidationError("weights must align with the vectors")
        if np.min(self.weights, initial=0.0) < -STATE_TRACE_TOL:
            raise ValidationError("negative mixture weight")
        if abs(float(np.sum(self.weights)) - 1.0) > STATE_TRACE_TOL:
            raise ValidationError(f"trace {np.sum(self.weights):.12f} != 1")
        gram = self.vectors.conj() @ self.vectors.T
        if np.max(np.abs(gram - np.eye(gram.shape[0]))) > 1e-8:
            raise ValidationError("mixture vectors are not orthonormal")

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def rank(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def pure(cls, vector: np.ndarray, lam: SiteSet, dims) -> "DensityState":
        vec = np.asarray(vector, dtype=np.complex128)
        n = np.linalg.norm(vec)
        if n == 0.0:
            raise ValidationError("cannot build a state from the zero vector")
        return cls(lam=lam, dims=tuple(dims), weights=np.array([1.0]), vectors=(vec / n)[None, :])

    @classmethod
    def mixture(cls, weights, vectors, lam: SiteSet, dims) -> "DensityState":
        return cls(lam=lam, dims=tuple(dims), weights=np.asarray(weights, float), vectors=np.asarray(vectors))

    @classmethod
    def uniform_mixture(cls, vectors, lam: SiteSet, dims) -> "DensityState":
        vecs = np.asarray(vectors, dtype=np.complex128)
        r = vecs.shape[0]
        return cls(lam=lam, dims=tuple(dims), weights=np.full(r, 1.0 / r), vectors=vecs)

    @classmethod
    def from_dense(cls, matrix: np.ndarray, lam: SiteSet, dims, tol: float = 1e-12) -> "DensityState":
        mat = np.asarray(matrix, dtype=np.complex128)
        if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
            raise ValidationError("density matrix is not Hermitian")
        evals, evecs = np.linalg.eigh(mat)
        if evals[0] < -1e-10:
            raise ValidationError(f"density matrix not positive semi-definite (min eig {evals[0]:.3e})")
        keep = evals > tol
        weights = evals[keep]
        weights = weights / np.sum(weights)
        return cls(lam=lam, dims=tuple(dims), weights=weights, vectors=np.ascontiguousarray(evecs[:, keep].T))

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.dim > cap:
            raise ValidationError(f"dimension {self.dim} exceeds dense cap {cap}")
        return (self.vectors.T * self.weights) @ self.vectors.conj()


def partial_trace(rho: DensityState, region: SiteSet, cap: int = DENSE_CAP) -> np.ndarray:
    """Reduced density matrix on ``region`` (trace over the complement)."""
    if not region.is_subset(rho.lam):
        raise ValidationError("region must be a subset of the state's lattice")
    positions = [rho.lam.index_of(s) for s in region.sites]
    dim_y = math.prod(rho.dims[p] for p in positions) if positions else 1
    if dim_y > cap:
        raise ValidationError(f"reduced dimension {dim_y} exceeds dense cap {cap}")
    out = np.zeros((dim_y, dim_y), dtype=np.complex128)
    k = len(positions)
    for w, vec in zip(rho.weights, rho.vectors):
        psi = vec.reshape(rho.dims)
        psi = np.moveaxis(psi, positions, range(k))
        mat = psi.reshape(dim_y, -1)
        out += w * (mat @ mat.conj().T)
    return out


def observable_discrepancy(rho1: DensityState, rho2: DensityState, a: LocalOperator, cap: int = DENSE_CAP) -> float:
    """|tr((rho1 - rho2) A)| evaluated on the reduced matrices over A's support."""
    region = a.support
    diff = partial_trace(rho1, region, cap) - partial_trace(rho2, region, cap)
    return float(abs(np.trace(diff @ a.matrix)))


def trace_distance_on(rho1: DensityState, rho2: DensityState, region: SiteSet, cap: int = DENSE_CAP) -> float:
    """Trace norm of the reduced difference: the worst case over unit-norm
    observables supported on ``region``."""
    diff = partial_trace(rho1, region, cap) - partial_trace(rho2, region, cap)
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(diff)))))


def extend_state_with(rho: DensityState, extended_system) -> DensityState:
    """Tensor rho with the on-site ground vectors of an extended system's new
    sites: the extension companion to growing a system onto a larger lattice."""
    new_vectors = {t.site: t.ground_vector for t in extended_system.onsite if t.site not in rho.lam}
    return extend_state(rho, extended_system.lam, new_vectors)


def extend_state(rho: DensityState, omega: SiteSet, new_site_vectors: dict) -> DensityState:
    """Tensor rho with pure on-site vectors on the sites of omega minus lam.

    ``new_site_vectors`` maps each added site to its (normalized) local
    vector; the result lives on omega in canonical order.
    """
    new_sites = omega.difference(rho.lam)
    missing = [s for s in new_sites.sites if s not in new_site_vectors]
    if missing:
        raise ValidationError(f"missing extension vectors for sites {missing}")
    add_vecs = [np.asarray(new_site_vectors[s], dtype=np.complex128) for s in new_sites.sites]
    add_dims = tuple(v.shape[0] for v in add_vecs)
    prod = np.array([1.0 + 0.0j])
    for v in add_vecs:
        prod = np.kron(prod, v / np.linalg.norm(v))
    dims_by_site = dict(zip(rho.lam.sites, rho.dims)) | dict(zip(new_sites.sites, add_dims))
    omega_dims = tuple(dims_by_site[s] for s in omega.sites)
    # source axis order: rho's sites then the new sites; permute to omega order
    source_sites = list(rho.lam.sites) + list(new_sites.sites)
    perm = [source_sites.index(s) for s in omega.sites]
    new_vectors = []
    for vec in rho.vectors:
        tens = np.multiply.outer(vec.reshape(rho.dims), prod.reshape(add_dims))
        new_vectors.append(np.transpose(tens, perm).reshape(-1))
    return DensityState.mixture(rho.weights, np.array(new_vectors), omega, omega_dims)


@dataclass
class BatteryReport:
    """Outcome of a commutator-positivity battery."""

    min_value: float
    passed: bool
    tol: float
    n_random: int
    n_hops: int
    n_adversarial: int
    max_abs_imag: float
    witness: dict | None
    seed: int

    def to_dict(self) -> dict:
        return {
            "min_value": self.min_value,
            "passed": self.passed,
            "tol": self.tol,
            "n_random": self.n_random,
            "n_hops": self.n_hops,
            "n_adversarial": self.n_adversarial,
            "max_abs_imag": self.max_abs_imag,
            "witness": self.witness,
            "seed": self.seed,
        }


def _candidate_supports(region: SiteSet) -> list[SiteSet]:
    """Singletons and l1-adjacent pairs inside ``region``."""
    singles = [SiteSet.from_sites([s], nu=region.nu) for s in region.sites]
    pairs = []
    sites = region.sites
    for i, a in enumerate(sites):
        for b in sites[i + 1 :]:
            if l1_distance(a, b) == 1:
                pairs.append(SiteSet.from_sites([a, b], nu=region.nu))
    return singles + pairs


class _CommutatorEvaluator:
    """Evaluates m(A) = tr(A* [H, A] rho) for battery operators.

    Caches H applied to each mixture vector; uses a dense H matrix when the
    dimension allows, which makes the adversarial search affordable.
    """

    def __init__(self, rho: DensityState, h_op: EmbeddedOperator, dense_cap: int):
        if h_op.dim != rho.dim:
            raise ValidationError("state and operator dimensions differ")
        self.rho = rho
        self.lam = rho.lam
        self.dims = rho.dims
        self.h_dense = h_op.dense(dense_cap) if h_op.dim <= dense_cap else None
        if self.h_dense is not None:
            self.h_apply = lambda v: self.h_dense @ v
        else:
            self.h_apply = h_op.apply
        self.h_vectors = np.array([self.h_apply(v) for v in rho.vectors])

    def m_local(self, a: LocalOperator) -> complex:
        positions = tuple(self.lam.index_of(s) for s in a.support.sites)
        return self.m_block(positions, a.matrix)

    def m_block(self, positions: tuple[int, ...], block: np.ndarray) -> complex:
        from .operators import _block_apply

        total = 0.0 + 0.0j
        for w, v, hv in zip(self.rho.weights, self.rho.vectors, self.h_vectors):
            u = _block_apply(v, self.dims, positions, block)
            total += w * (
                np.vdot(u, self.h_apply(u)) - np.vdot(u, _block_apply(hv, self.dims, positions, block))
            )
        return complex(total)


def _adversarial_search(
    evaluator: _CommutatorEvaluator,
    supports: Sequence[SiteSet],
    rng: np.random.Generator,
    restarts: int,
    sweeps: int = 2,
    stop_below: float | None = None,
):
    """Coordinate descent on the entries of A over a fixed small support.

    m(A) is a quadratic form in the entries, so the per-coordinate restriction
    is an exact parabola; three sampled values give its vertex without any
    derivatives.  A is renormalized after every sweep, and the reported value
    is normalized by the squared operator norm so that it is comparable with
    the tolerance used for unit-norm battery operators.
    """
    best_value = math.inf
    best_witness = None
    step = 0.5
    n_done = 0
    for _ in range(restarts):
        support = supports[rng.integers(len(supports))]
        positions = tuple(evaluator.lam.index_of(s) for s in support.sites)
        local_dims = tuple(evaluator.dims[p] for p in positions)
        d = math.prod(local_dims)
        mat = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        mat /= np.linalg.norm(mat)

        def value(m) -> float:
            return float(np.real(evaluator.m_block(positions, m)))

        current = value(mat)
        for _ in range(sweeps):
            for p in range(d):
                for q in range(d):
                    for unit in (1.0, 1.0j):
                        minus = mat.copy()
                        minus[p, q] -= step * unit
                        plus = mat.copy()
                        plus[p, q] += step * unit
                        f_minus, f_plus = value(minus), value(plus)
                        curv = f_minus - 2.0 * current + f_plus
                        if curv > 1e-14:
                            t = 0.5 * step * (f_minus - f_plus) / curv
                        elif min(f_minus, f_plus) < current:
                            # flat or concave slice: step toward the lower sample
                            t = -step if f_minus < f_plus else step
                        else:
                            t = 0.0
                        t = float(np.clip(t, -4 * step, 4 * step))
                        if t != 0.0:
                            mat[p, q] += t * unit
                            current = value(mat)
            norm = np.linalg.norm(mat)
            if norm > 0:
                mat /= norm
                current = value(mat)
        op = LocalOperator(support, mat, local_dims)
        opn = operator_norm(op)
        n_done += 1
        if opn > 0:
            scaled = current / opn**2
            if scaled < best_value:
                best_value = scaled
                best_witness = {
                    "kind": "adversarial",
                    "support": [list(s) for s in support.sites],
                    "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in (mat / opn)],
                    "value": scaled,
                }
            if stop_below is not None and best_value < stop_below:
                break
    return best_value, best_witness, n_done


def _run_battery(
    rho: DensityState,
    h_op: EmbeddedOperator,
    region: SiteSet,
    trials: int,
    seed: int,
    tol: float,
    allow_hops: bool,
    hop_levels: int,
    adversarial_restarts: int,
    dense_cap: int,
    stop_below: float | None,
) -> BatteryReport:
    if trials < 1:
        raise ValidationError("battery needs at least one trial")
    supports = _candidate_supports(region)
    if not supports:
        raise ValidationError("no candidate supports inside the allowed region")
    rng = np.random.default_rng(seed)
    evaluator = _CommutatorEvaluator(rho, h_op, dense_cap)

    best_value = math.inf
    witness = None
    max_imag = 0.0

    def consider(value: complex, description: dict):
        nonlocal best_value, witness, max_imag
        max_imag = max(max_imag, abs(value.imag))
        if value.real < best_value:
            best_value = value.real
            witness = description

    n_random = 0
    for _ in range(trials):
        support = supports[rng.integers(len(supports))]
        positions = [rho.lam.index_of(s) for s in support.sites]
        local_dims = tuple(rho.dims[p] for p in positions)
        d = math.prod(local_dims)
        mat = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        if rng.uniform() < 0.5:
            mat = hermitize(mat)
        op = LocalOperator(support, mat, local_dims)
        norm = operator_norm(op)
        if norm == 0.0:
            continue
        op = op.scaled(1.0 / norm)
        m = evaluator.m_local(op)
        n_random += 1
        consider(
            m,
            {
                "kind": "random_local",
                "support": [list(s) for s in support.sites],
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in op.matrix],
                "value": m.real,
            },
        )
        if stop_below is not None and best_value < stop_below:
            return BatteryReport(best_value, best_value >= -tol, tol, n_random, 0, 0, max_imag, witness, seed)

    n_hops = 0
    if allow_hops and evaluator.h_dense is not None:
        evals, evecs = np.linalg.eigh(evaluator.h_dense)
        levels = min(hop_levels, len(evals))
        rho_diag = np.array(
            [
                float(np.real(np.sum(evaluator.rho.weights * np.abs(evaluator.rho.vectors.conj() @ evecs[:, j]) ** 2)))
                for j in range(levels)
            ]
        )
        for a_idx in range(levels):
            for b_idx in range(levels):
                if a_idx == b_idx:
                    continue
                # A = |phi_a><phi_b| has [H, A] = (E_a - E_b) A, so
                # m(A) = (E_a - E_b) <phi_b| rho |phi_b>
                m = (evals[a_idx] - evals[b_idx]) * rho_diag[b_idx]
                n_hops += 1
                consider(
                    complex(m),
                    {"kind": "eigenvector_hop", "ket_level": int(a_idx), "bra_level": int(b_idx), "value": float(m)},
                )
                if stop_below is not None and best_value < stop_below:
                    return BatteryReport(
                        best_value, best_value >= -tol, tol, n_random, n_hops, 0, max_imag, witness, seed
                    )

    n_adv = 0
    if adversarial_restarts > 0:
        adv_value, adv_witness, n_adv = _adversarial_search(
            evaluator, supports, rng, adversarial_restarts, stop_below=stop_below
        )
        if adv_value < best_value:
            best_value = adv_value
            witness = adv_witness

    passed = best_value >= -tol
    return BatteryReport(
        min_value=float(best_value),
        passed=passed,
        tol=tol,
        n_random=n_random,
        n_hops=n_hops,
        n_adversarial=n_adv,
        max_abs_imag=float(max_imag),
        witness=None if passed else witness,
        seed=seed,
    )


def ground_state_commutator_test(
    rho: DensityState,
    h_op: EmbeddedOperator,
    trials: int = 200,
    seed: int = 0,
    tol: float = BATTERY_TOL,
    region: SiteSet | None = None,
    hop_levels: int = 12,
    adversarial_restarts: int = 200,
    dense_cap: int = 1024,
    stop_below: float | None = None,
) -> BatteryReport:
    """PASS iff min over the battery of tr(A* [H, A] rho) >= -tol."""
    return _run_battery(
        rho,
        h_op,
        region if region is not None else rho.lam,
        trials,
        seed,
        tol,
        allow_hops=region is None or len(region) == len(rho.lam),
        hop_levels=hop_levels,
        adversarial_restarts=adversarial_restarts,
        dense_cap=dense_cap,
        stop_below=stop_below,
    )


def bulk_ground_state_test(
    rho: DensityState,
    restricted_system,
    trials: int = 200,
    seed: int = 0,
    tol: float = BATTERY_TOL,
    adversarial_restarts: int = 200,
    dense_cap: int = 1024,
    stop_below: float | None = None,
) -> BatteryReport:
    """Commutator battery with A restricted to the bulk of a restricted
    Hamiltonian, which acts on the state's (larger) lattice as itself tensor
    identity."""
    from .system import SpinSystem, assemble

    if not isinstance(restricted_system, SpinSystem):
        raise ValidationError("restricted_system must be a SpinSystem")
    if not restricted_system.lam.is_subset(rho.lam):
        raise ValidationError("restricted system must live inside the state's lattice")
    region = bulk(restricted_system.lam, restricted_system.interaction_range)
    if len(region) == 0:
        raise ValidationError("empty bulk: the restricted region is too small for this range")
    h_op = assemble(restricted_system, lam=rho.lam, site_dims=rho.dims)
    return _run_battery(
        rho,
        h_op,
        region,
        trials,
        seed,
        tol,
        allow_hops=False,
        hop_levels=0,
        adversarial_restarts=adversarial_restarts,
        dense_cap=dense_cap,
        stop_below=stop_below,
    )
