"""Dense operators on small tensor factors and their matrix-free embedding.

Conventions
-----------
The canonical basis index of the full space is a mixed-radix number over the
sites of the lattice in canonical (lexicographic) order, most significant
digit first.  This matches a C-ordered ``reshape`` of a state vector into one
axis per site, and matches ``np.kron`` chained left to right over sites.

An embedded operator never materializes the full matrix during application:
the state is reshaped into its per-site tensor, the support axes are moved to
the front, and the small dense block acts on them at once.  Memory stays
O(dim).  The full dense matrix is available on demand for dimensions up to a
configurable cap.
"""

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .lattice import SiteSet

#: Largest dimension for which dense matrices are materialized on demand.
DENSE_CAP = 4096

#: Hard limit on the addressable full-space dimension.
MAX_DIMENSION = 2**31

HERMITIAN_TOL = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


def pauli(name: str) -> np.ndarray:
    try:
        return {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}[name.lower().removeprefix("pauli_")].copy()
    except KeyError:
        raise ValidationError(f"unknown Pauli name {name!r}") from None


def projector(level: int, dim: int = 2) -> np.ndarray:
    """|level><level| on a dim-dimensional local space."""
    if not 0 <= level < dim:
        raise ValidationError(f"projector level {level} outside [0, {dim})")
    mat = np.zeros((dim, dim), dtype=np.complex128)
    mat[level, level] = 1.0
    return mat


def ladder(direction: str, dim: int = 2) -> np.ndarray:
    """Raising (|k+1><k|) or lowering (|k><k+1|) operator."""
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(dim - 1):
        mat[k + 1, k] = 1.0
    if direction == "raising":
        return mat
    if direction == "lowering":
        return mat.conj().T
    raise ValidationError(f"unknown ladder direction {direction!r}")


def hermitize(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.conj().T) / 2.0


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Dense operator on the tensor factor of a small support set.

    ``site_dims`` is aligned with ``support.sites`` (canonical order); the
    matrix dimension must equal their product.
    """

    support: SiteSet
    matrix: np.ndarray
    site_dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.site_dims) != len(self.support):
            raise ValidationError("site_dims must align with the support sites")
        if any(d < 1 for d in self.site_dims):
            raise ValidationError("local dimensions must be >= 1")
        dim = math.prod(self.site_dims)
        mat = np.asarray(self.matrix, dtype=np.complex128)
        if mat.shape != (dim, dim):
            raise ValidationError(
                f"matrix shape {mat.shape} does not match support dimension {dim}"
            )
        if not np.all(np.isfinite(mat.view(np.float64))):
            raise ValidationError("matrix has non-finite entries")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def create(cls, support: SiteSet, matrix, site_dims=None, hermitian: bool = False) -> "LocalOperator":
        if site_dims is None:
            site_dims = (2,) * len(support)
        op = cls(support=support, matrix=np.asarray(matrix, dtype=np.complex128), site_dims=tuple(site_dims))
        if hermitian:
            op.require_hermitian()
        return op

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def require_hermitian(self, tol: float = HERMITIAN_TOL) -> "LocalOperator":
        if not self.is_hermitian(tol):
            raise ValidationError("operator is not Hermitian within tolerance")
        return self

    def dim_of(self, site) -> int:
        return self.site_dims[self.support.index_of(site)]

    def scaled(self, factor: complex) -> "LocalOperator":
        return LocalOperator(self.support, factor * self.matrix, self.site_dims)


def identity_operator(support: SiteSet, site_dims=None) -> LocalOperator:
    if site_dims is None:
        site_dims = (2,) * len(support)
    dim = math.prod(site_dims)
    return LocalOperator(support, np.eye(dim, dtype=np.complex128), tuple(site_dims))


def single_site_operator(site, matrix, lam_nu: int | None = None) -> LocalOperator:
    support = SiteSet.from_sites([site], nu=lam_nu)
    mat = np.asarray(matrix, dtype=np.complex128)
    return LocalOperator(support, mat, (mat.shape[0],))


def random_local_operator(
    support: SiteSet,
    rng: np.random.Generator,
    site_dims=None,
    hermitian: bool = True,
    norm: float | None = 1.0,
) -> LocalOperator:
    """Complex-Gaussian operator on ``support``, optionally Hermitized and
    rescaled to a target operator norm."""
    if site_dims is None:
        site_dims = (2,) * len(support)
    dim = math.prod(site_dims)
    mat = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    if hermitian:
        mat = hermitize(mat)
    op = LocalOperator(support, mat, tuple(site_dims))
    if norm is not None:
        current = operator_norm(op)
        if current == 0.0:
            raise ValidationError("degenerate zero random draw")
        op = op.scaled(norm / current)
    return op


def operator_norm(op: LocalOperator, cap: int = DENSE_CAP) -> float:
    """Largest singular value (= max |eigenvalue| for Hermitian operators)."""
    if op.dim > cap:
        raise ValidationError(f"operator dimension {op.dim} exceeds dense cap {cap}")
    if op.is_hermitian():
        return float(np.max(np.abs(np.linalg.eigvalsh(op.matrix))))
    return float(np.linalg.norm(op.matrix, 2))


@dataclass
class StateVector:
    """Vector on the full tensor space of a site set."""

    amplitudes: np.ndarray
    lam: SiteSet
    dims: tuple[int, ...]

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        expected = math.prod(self.dims)
        if self.amplitudes.shape != (expected,):
            raise ValidationError(
                f"amplitude vector of length {self.amplitudes.shape} does not match dimension {expected}"
            )
        if not np.all(np.isfinite(self.amplitudes.view(np.float64))):
            raise ValidationError("state vector has non-finite amplitudes")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.lam, self.dims)


def resolve_site_dims(lam: SiteSet, site_dims=None, default: int = 2) -> tuple[int, ...]:
    """Per-site dimensions aligned with lam's canonical order."""
    if site_dims is None:
        return (default,) * len(lam)
    if isinstance(site_dims, Mapping):
        return tuple(int(site_dims.get(s, default)) for s in lam.sites)
    dims = tuple(int(d) for d in site_dims)
    if len(dims) != len(lam):
        raise ValidationError("site_dims sequence must align with the site set")
    return dims


class EmbeddedOperator:
    """Matrix-free operator on the full tensor space of ``lam``.

    Wraps an application callable together with the space metadata.  Use
    :func:`embed` / :func:`embed_sum` / :func:`commutator_action` to build one.
    """

    def __init__(self, lam: SiteSet, dims: Sequence[int], apply_fn: Callable[[np.ndarray], np.ndarray], hermitian: bool = False):
        self.lam = lam
        self.dims = tuple(int(d) for d in dims)
        self.dim = math.prod(self.dims)
        if self.dim > MAX_DIMENSION:
            raise ValidationError(f"full-space dimension {self.dim} exceeds addressable range")
        self.hermitian = hermitian
        self._apply = apply_fn

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.complex128)
        if vec.shape != (self.dim,):
            raise ValidationError(f"vector of shape {vec.shape} does not match dimension {self.dim}")
        return self._apply(vec)

    def apply_state(self, state: StateVector) -> StateVector:
        return StateVector(self.apply(state.amplitudes), self.lam, self.dims)

    def expectation(self, vec: np.ndarray) -> complex:
        vec = np.asarray(vec, dtype=np.complex128)
        return complex(np.vdot(vec, self.apply(vec)))

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.dim > cap:
            raise ValidationError(f"dimension {self.dim} exceeds dense cap {cap}")
        out = np.empty((self.dim, self.dim), dtype=np.complex128)
        basis = np.zeros(self.dim, dtype=np.complex128)
        for i in range(self.dim):
            basis[i] = 1.0
            out[:, i] = self._apply(basis)
            basis[i] = 0.0
        return out


def _block_apply(vec: np.ndarray, dims: tuple[int, ...], positions: tuple[int, ...], block: np.ndarray) -> np.ndarray:
    psi = vec.reshape(dims)
    k = len(positions)
    psi = np.moveaxis(psi, positions, range(k))
    moved_shape = psi.shape
    head = psi.reshape(block.shape[0], -1)
    res = block @ head
    res = res.reshape(moved_shape)
    res = np.moveaxis(res, range(k), positions)
    return np.ascontiguousarray(res).reshape(-1)


def _support_positions(op: LocalOperator, lam: SiteSet, dims: tuple[int, ...]) -> tuple[int, ...]:
    positions = []
    for site, d in zip(op.support.sites, op.site_dims):
        if site not in lam:
            raise ValidationError(f"support site {site} not contained in the target site set")
        pos = lam.index_of(site)
        if dims[pos] != d:
            raise ValidationError(f"local dimension mismatch at site {site}: {dims[pos]} vs {d}")
        positions.append(pos)
    return tuple(positions)


def embed(op: LocalOperator, lam: SiteSet, site_dims=None) -> EmbeddedOperator:
    """View ``op`` as op tensor identity on the rest of ``lam``, matrix-free."""
    dims = resolve_site_dims(lam, site_dims)
    positions = _support_positions(op, lam, dims)
    block = np.ascontiguousarray(op.matrix)

    def apply_fn(vec: np.ndarray) -> np.ndarray:
        return _block_apply(vec, dims, positions, block)

    return EmbeddedOperator(lam, dims, apply_fn, hermitian=op.is_hermitian())


def embed_sum(ops: Sequence[LocalOperator], lam: SiteSet, site_dims=None) -> EmbeddedOperator:
    """Matrix-free applier for a sum of local operators on a common space."""
    dims = resolve_site_dims(lam, site_dims)
    terms = [(_support_positions(op, lam, dims), np.ascontiguousarray(op.matrix)) for op in ops]
    hermitian = all(op.is_hermitian() for op in ops)

    def apply_fn(vec: np.ndarray) -> np.ndarray:
        out = np.zeros_like(vec)
        for positions, block in terms:
            out += _block_apply(vec, dims, positions, block)
        return out

    return EmbeddedOperator(lam, dims, apply_fn, hermitian=hermitian)


def commutator_action(k_op: EmbeddedOperator, a: LocalOperator) -> EmbeddedOperator:
    """Matrix-free applier for [K, A] = K A - A K on K's space."""
    a_emb = embed(a, k_op.lam, k_op.dims)

    def apply_fn(vec: np.ndarray) -> np.ndarray:
        return k_op.apply(a_emb.apply(vec)) - a_emb.apply(k_op.apply(vec))

    return EmbeddedOperator(k_op.lam, k_op.dims, apply_fn, hermitian=False)
