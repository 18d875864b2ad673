"""Lowest eigenpairs of matrix-free Hermitian operators.

The solver is a restarted Lanczos iteration with full reorthogonalization and
deflation: eigenpairs are converged one at a time, each run working in the
orthogonal complement of the already-locked vectors.  Full reorthogonalization
keeps the basis clean enough for reliable degeneracy detection, which the
perturbation experiments depend on; deflation makes (near-)degenerate ground
spaces reachable at all, since a single Krylov run can only ever produce one
vector per exactly degenerate cluster.

Restarting with the current Ritz vector accumulates polynomial-filter degree
across restarts, which is what eventually resolves quasi-degenerate pairs
(splittings of 1e-4 and below) that a single fixed-size basis cannot separate.

A dense-diagonalization oracle (`dense_eigenpairs`) is provided for
cross-checks on small systems.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, ValidationError
from .operators import DENSE_CAP, EmbeddedOperator

DEFAULT_TOL = 1e-10
DEFAULT_MAX_BASIS = 80
DEFAULT_MAX_RESTARTS = 200
BREAKDOWN_TOL = 1e-14


def default_degeneracy_tol(ground_energy: float) -> float:
    return 1e-8 * max(1.0, abs(ground_energy))


@dataclass
class SpectralResult:
    """k lowest eigenpairs, ascending, with solver diagnostics."""

    energies: np.ndarray
    vectors: np.ndarray  # shape (k, dim), orthonormal rows
    residual_norms: np.ndarray
    degenerate: bool
    gap: float | None
    degeneracy_tol: float
    matvecs: int
    wall_time: float
    seed: int

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    def cluster_size(self) -> int:
        return int(np.sum(self.energies <= self.energies[0] + self.degeneracy_tol))

    def diagnostics(self) -> dict:
        return {
            "matvecs": self.matvecs,
            "max_residual": float(np.max(self.residual_norms)),
            "wall_time": self.wall_time,
            "seed": self.seed,
        }


def _orthogonalize(vec: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # two passes of classical Gram-Schmidt against the rows
    if rows.shape[0] == 0:
        return vec
    for _ in range(2):
        vec = vec - rows.T @ (rows.conj() @ vec)
    return vec


def _start_vector(rng: np.random.Generator, dim: int, locked: np.ndarray) -> np.ndarray:
    for _ in range(20):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v = _orthogonalize(v, locked)
        n = np.linalg.norm(v)
        if n > 1e-8:
            return v / n
    raise SolverError("could not draw a start vector orthogonal to the locked space")


def _lanczos_one(
    h_apply,
    dim: int,
    locked: np.ndarray,
    tol: float,
    rng: np.random.Generator,
    max_basis: int,
    max_restarts: int,
):
    """Converge the lowest eigenpair of H restricted to the complement of
    the locked rows.  Returns (energy, vector, residual, matvecs)."""
    matvecs = 0
    basis_cap = min(max_basis, dim - locked.shape[0])
    v = _start_vector(rng, dim, locked)
    best = (math.inf, None, math.inf)
    for _ in range(max_restarts):
        V = np.empty((basis_cap, dim), dtype=np.complex128)
        alphas: list[float] = []
        betas: list[float] = []
        V[0] = v
        j = 0
        w = h_apply(V[0])
        matvecs += 1
        while True:
            alpha = float(np.real(np.vdot(V[j], w)))
            alphas.append(alpha)
            w = w - alpha * V[j]
            if j > 0:
                w = w - betas[-1] * V[j - 1]
            w = _orthogonalize(w, locked)
            w = _orthogonalize(w, V[: j + 1])
            if j + 1 >= basis_cap:
                break
            beta = float(np.linalg.norm(w))
            if beta < BREAKDOWN_TOL:
                break
            V[j + 1] = w / beta
            betas.append(beta)
            j += 1
            w = h_apply(V[j])
            matvecs += 1
        m = len(alphas)
        tmat = np.diag(alphas)
        if betas:
            off = np.array(betas[: m - 1])
            tmat += np.diag(off, 1) + np.diag(off, -1)
        theta, y = np.linalg.eigh(tmat)
        x = V[:m].T @ y[:, 0]
        x = _orthogonalize(x, locked)
        x = x / np.linalg.norm(x)
        hx = h_apply(x)
        matvecs += 1
        energy = float(np.real(np.vdot(x, hx)))
        residual = float(np.linalg.norm(hx - energy * x))
        if residual < best[2]:
            best = (energy, x, residual)
        if residual <= tol:
            return energy, x, residual, matvecs
        # restart from the Ritz vector; perturb slightly if the Krylov space
        # closed on an invariant subspace without reaching the tolerance
        if m < basis_cap:
            noise = _start_vector(rng, dim, locked)
            x = x + 1e-6 * noise
            x = _orthogonalize(x, locked)
            x = x / np.linalg.norm(x)
        v = x
    raise SolverError(
        f"Lanczos did not converge to tol={tol:g} within {max_restarts} restarts "
        f"(best residual {best[2]:.3e})",
        best_energy=best[0],
        best_residual=best[2],
    )


def lowest_eigenpairs(
    h_op: EmbeddedOperator,
    k: int = 4,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    max_basis: int = DEFAULT_MAX_BASIS,
    max_restarts: int = DEFAULT_MAX_RESTARTS,
    degeneracy_tol: float | None = None,
) -> SpectralResult:
    """k lowest eigenpairs by deflated, restarted Lanczos iteration.

    Deterministic for a fixed seed: start vectors come from one seeded
    generator and the iteration itself is free of randomness.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if h_op.dim < k:
        raise ValidationError(f"dimension {h_op.dim} too small for k={k}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    dim = h_op.dim
    locked = np.zeros((0, dim), dtype=np.complex128)
    energies: list[float] = []
    residuals: list[float] = []
    matvecs = 0
    for _ in range(k):
        energy, vec, residual, used = _lanczos_one(
            h_op.apply, dim, locked, tol, rng, max_basis, max_restarts
        )
        matvecs += used
        locked = np.vstack([locked, vec[None, :]])
        energies.append(energy)
        residuals.append(residual)
    order = np.argsort(energies, kind="stable")
    energy_arr = np.array(energies)[order]
    vec_arr = locked[order]
    resid_arr = np.array(residuals)[order]
    dtol = degeneracy_tol if degeneracy_tol is not None else default_degeneracy_tol(energy_arr[0])
    cluster = energy_arr <= energy_arr[0] + dtol
    above = energy_arr[~cluster]
    gap = float(above[0] - energy_arr[0]) if above.size else None
    return SpectralResult(
        energies=energy_arr,
        vectors=vec_arr,
        residual_norms=resid_arr,
        degenerate=bool(np.sum(cluster) > 1),
        gap=gap,
        degeneracy_tol=float(dtol),
        matvecs=matvecs,
        wall_time=time.perf_counter() - t0,
        seed=seed,
    )


def dense_eigenpairs(h_op: EmbeddedOperator, k: int, cap: int = DENSE_CAP) -> SpectralResult:
    """Dense-diagonalization oracle for cross-checking the Krylov path."""
    if h_op.dim < k:
        raise ValidationError(f"dimension {h_op.dim} too small for k={k}")
    t0 = time.perf_counter()
    mat = h_op.dense(cap)
    evals, evecs = np.linalg.eigh(mat)
    energies = evals[:k].astype(float)
    vectors = np.ascontiguousarray(evecs[:, :k].T)
    residuals = np.array(
        [float(np.linalg.norm(mat @ vectors[i] - energies[i] * vectors[i])) for i in range(k)]
    )
    dtol = default_degeneracy_tol(energies[0])
    cluster = energies <= energies[0] + dtol
    above = energies[~cluster]
    gap = float(above[0] - energies[0]) if above.size else None
    return SpectralResult(
        energies=energies,
        vectors=vectors,
        residual_norms=residuals,
        degenerate=bool(np.sum(cluster) > 1),
        gap=gap,
        degeneracy_tol=float(dtol),
        matvecs=h_op.dim,
        wall_time=time.perf_counter() - t0,
        seed=-1,
    )


@dataclass
class GroundSpace:
    """Orthonormal basis of the ground eigenvalue cluster of an operator."""

    energy: float
    basis: np.ndarray  # shape (r, dim)
    gap_above: float
    degeneracy_tol: float
    result: SpectralResult = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]


def ground_space(
    h_op: EmbeddedOperator,
    k: int = 4,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    degeneracy_tol: float | None = None,
    max_basis: int = DEFAULT_MAX_BASIS,
    max_restarts: int = DEFAULT_MAX_RESTARTS,
    max_k: int = 16,
) -> GroundSpace:
    """Ground cluster {E : E - E0 <= degeneracy_tol} with a separation margin.

    If the computed window does not bracket the cluster (the first energy
    above it comes within 2 * degeneracy_tol of the cluster edge), k is
    doubled and the solve retried; a hard error is raised once k exceeds
    ``max_k`` or the full dimension.
    """
    current_k = min(max(k, 2), h_op.dim)
    while True:
        res = lowest_eigenpairs(
            h_op,
            k=current_k,
            tol=tol,
            seed=seed,
            max_basis=max_basis,
            max_restarts=max_restarts,
            degeneracy_tol=degeneracy_tol,
        )
        dtol = res.degeneracy_tol
        cluster_mask = res.energies <= res.energies[0] + dtol
        cluster_edge = float(np.max(res.energies[cluster_mask]))
        above = res.energies[~cluster_mask]
        separated = above.size > 0 and float(above[0]) - cluster_edge > 2 * dtol
        if separated:
            return GroundSpace(
                energy=res.ground_energy,
                basis=res.vectors[cluster_mask],
                gap_above=float(above[0] - res.energies[0]),
                degeneracy_tol=dtol,
                result=res,
            )
        if current_k >= min(max_k, h_op.dim):
            raise SolverError(
                f"ground cluster not separated within k={current_k} "
                f"(energies {res.energies.tolist()})"
            )
        current_k = min(current_k * 2, max_k, h_op.dim)


def spectral_gap(
    h_op: EmbeddedOperator,
    k: int = 4,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    degeneracy_tol: float | None = None,
    **kwargs,
) -> float:
    """Energy difference between the ground cluster and the next level."""
    gs = ground_space(h_op, k=k, tol=tol, seed=seed, degeneracy_tol=degeneracy_tol, **kwargs)
    return gs.gap_above
