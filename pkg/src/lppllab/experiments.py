"""End-to-end locality experiments.

A scenario fixes a system, an optional perturbation, a family of observables,
and a geometry mode saying which lattice distance is expected to control the
decay of the discrepancy:

* ``perturbation`` - distance from the observable support to the perturbation
  support;
* ``local_gap``    - the minimum of that distance and the distance to the
  complement of the protected region (defected systems);
* ``bulk``         - the minimum of the distance to the complement of the
  lattice bulk and (distance to the perturbation minus 2R).

Running a scenario solves the ground spaces of the unperturbed and perturbed
Hamiltonians, evaluates per-observable discrepancies and the trace-norm worst
case on every observable support, and emits one record per observable per
ground-space branch.  Decay constants are then fitted on the log of the upper
envelope of the discrepancy versus the controlling distance.
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .errors import ValidationError
from .lattice import SiteSet, bulk, set_complement_distance, set_distance
from .eigen import GroundSpace, ground_space
from .operators import LocalOperator, pauli, single_site_operator
from .seeds import derive_seed
from .states import DensityState, observable_discrepancy, trace_distance_on
from .system import (
    LocallyWeakSystem,
    Perturbation,
    SpinSystem,
    assemble,
    assemble_defected,
    build_system,
    uniform_onsite,
    xx_chain_interactions,
)

GeometryMode = Literal["perturbation", "local_gap", "bulk"]

NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    k: int = 4
    tol: float = 1e-10
    max_basis: int = 80
    max_restarts: int = 200
    degeneracy_tol: float | None = None

    def solve(self, h_op, seed: int) -> GroundSpace:
        return ground_space(
            h_op,
            k=self.k,
            tol=self.tol,
            seed=seed,
            degeneracy_tol=self.degeneracy_tol,
            max_basis=self.max_basis,
            max_restarts=self.max_restarts,
        )


@dataclass(frozen=True)
class LpplScenario:
    scenario_id: str
    system: SpinSystem | LocallyWeakSystem
    perturbation: Perturbation | None
    observables: tuple[LocalOperator, ...]
    geometry: str = "perturbation"
    solver: SolverSettings = field(default_factory=SolverSettings)
    seed: int = 1

    @property
    def lam(self) -> SiteSet:
        return self.system.lam

    @property
    def strength(self) -> float:
        sys = self.system.tilde if isinstance(self.system, LocallyWeakSystem) else self.system
        return sys.strength

    @property
    def interaction_range(self) -> int:
        sys = self.system.tilde if isinstance(self.system, LocallyWeakSystem) else self.system
        return sys.interaction_range

    def p_scale(self) -> float:
        return 0.0 if self.perturbation is None else self.perturbation.norm()


@dataclass
class LpplRecord:
    """One experiment datum: geometry, discrepancies, gaps, diagnostics."""

    scenario_id: str
    curve: str
    n_sites: int
    strength: float
    p_scale: float
    branch: int
    observable: str
    dist_yx: float
    dist_aux: float
    fit_distance: float
    abs_y: int
    discrepancy_obs: float
    discrepancy_tracenorm: float
    gap_h: float
    gap_hp: float
    resid: float
    seed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _observable_label(op: LocalOperator, index: int) -> str:
    coords = ",".join("(" + ",".join(str(c) for c in s) + ")" for s in op.support.sites)
    return f"A{index}@{coords}"


def _fit_distance(geometry: str, dist_yx: float, dist_aux: float, interaction_range: int) -> float:
    if geometry == "perturbation":
        return dist_yx
    if geometry == "local_gap":
        return min(dist_yx, dist_aux)
    if geometry == "bulk":
        return min(dist_aux, dist_yx - 2 * interaction_range)
    raise ValidationError(f"unknown geometry mode {geometry!r}")


def _branch_states(gs: GroundSpace, lam: SiteSet, dims) -> list[tuple[int, DensityState]]:
    """Each cluster basis state, plus the uniform mixture when degenerate."""
    branches = [(i, DensityState.pure(gs.basis[i], lam, dims)) for i in range(gs.dimension)]
    if gs.dimension > 1:
        branches.append((gs.dimension, DensityState.uniform_mixture(gs.basis, lam, dims)))
    return branches


def _reference_state(gs: GroundSpace, lam: SiteSet, dims) -> DensityState:
    if gs.dimension == 1:
        return DensityState.pure(gs.basis[0], lam, dims)
    return DensityState.uniform_mixture(gs.basis, lam, dims)


def _emit_records(
    scenario: LpplScenario,
    curve: str,
    branches,
    reference: DensityState,
    x_support: SiteSet,
    aux_region_distance,
    gap_h: float,
    gap_hp: float,
    resid: float,
    fit_distance_fn=None,
) -> list[LpplRecord]:
    lam = scenario.lam
    if fit_distance_fn is None:
        fit_distance_fn = lambda yx, aux: _fit_distance(
            scenario.geometry, yx, aux, scenario.interaction_range
        )
    records = []
    for branch_id, state in branches:
        for idx, a in enumerate(scenario.observables):
            region = a.support
            dist_yx = set_distance(region, x_support)
            dist_aux = aux_region_distance(region)
            records.append(
                LpplRecord(
                    scenario_id=scenario.scenario_id,
                    curve=curve,
                    n_sites=len(lam),
                    strength=scenario.strength,
                    p_scale=scenario.p_scale(),
                    branch=branch_id,
                    observable=_observable_label(a, idx),
                    dist_yx=float(dist_yx),
                    dist_aux=float(dist_aux),
                    fit_distance=float(fit_distance_fn(dist_yx, dist_aux)),
                    abs_y=len(region),
                    discrepancy_obs=observable_discrepancy(state, reference, a),
                    discrepancy_tracenorm=trace_distance_on(state, reference, region),
                    gap_h=gap_h,
                    gap_hp=gap_hp,
                    resid=resid,
                    seed=scenario.seed,
                )
            )
    return records


def _validate_observables(scenario: LpplScenario) -> None:
    lam = scenario.lam
    allowed = lam
    if scenario.geometry == "local_gap":
        if not isinstance(scenario.system, LocallyWeakSystem):
            raise ValidationError("local_gap geometry requires a defected system")
        allowed = scenario.system.region
    for idx, a in enumerate(scenario.observables):
        if not a.support.is_subset(lam):
            raise ValidationError(f"observable {idx} supported outside the lattice")
        if scenario.geometry == "local_gap" and not a.support.is_subset(allowed):
            raise ValidationError(
                f"observable {idx} ({_observable_label(a, idx)}) not contained in the protected region"
            )


@dataclass
class ScenarioOutcome:
    records: list[LpplRecord]
    gap_h: float
    gap_hp: float
    diagnostics: dict


def run_scenario(scenario: LpplScenario) -> ScenarioOutcome:
    """Solve ground spaces of H and H+P and measure every observable.

    Requires a plain (non-defected) system; use :func:`run_local_gap_scenario`
    for defected geometries.
    """
    if isinstance(scenario.system, LocallyWeakSystem):
        raise ValidationError("run_scenario expects a plain system (got a defected one)")
    if not scenario.observables:
        raise ValidationError("scenario has no observables")
    _validate_observables(scenario)
    system = scenario.system
    lam, dims = system.lam, system.dims
    t0 = time.perf_counter()
    h_op = assemble(system)
    hp_op = assemble(system, scenario.perturbation)
    gs_h = scenario.solver.solve(h_op, derive_seed(scenario.seed, "solver", 0))
    gs_hp = scenario.solver.solve(hp_op, derive_seed(scenario.seed, "solver", 1))
    reference = _reference_state(gs_h, lam, dims)
    branches = _branch_states(gs_hp, lam, dims)
    x_support = (
        scenario.perturbation.support
        if scenario.perturbation is not None
        else SiteSet.from_sites([], nu=lam.nu)
    )
    lattice_bulk = bulk(lam, system.interaction_range)
    records = _emit_records(
        scenario,
        curve="main",
        branches=branches,
        reference=reference,
        x_support=x_support,
        aux_region_distance=lambda region: set_complement_distance(region, lattice_bulk),
        gap_h=gs_h.gap_above,
        gap_hp=gs_hp.gap_above,
        resid=max(
            float(np.max(gs_h.result.residual_norms)),
            float(np.max(gs_hp.result.residual_norms)),
        ),
    )
    diagnostics = {
        "solve_h": gs_h.result.diagnostics(),
        "solve_hp": gs_hp.result.diagnostics(),
        "wall_time": time.perf_counter() - t0,
        "branches": gs_hp.dimension,
    }
    return ScenarioOutcome(records, gs_h.gap_above, gs_hp.gap_above, diagnostics)


def run_local_gap_scenario(scenario: LpplScenario) -> ScenarioOutcome:
    """Scenario runner for defected systems H = tilde_H + Q (+ P).

    Emits up to three curves:

    * ``defect``      - ground states of tilde_H + Q against the ground state
      of tilde_H (decay in the distance to the defect region);
    * ``main``        - ground states of tilde_H + Q + P against the
      tilde_H + Q reference (decay in the min distance), when P is present;
    * ``p_vs_tilde``  - ground states of tilde_H + Q + P against the tilde_H
      ground state, when P is present (triangle-route intermediate).

    Every record carries both controlling distances.
    """
    if not isinstance(scenario.system, LocallyWeakSystem):
        raise ValidationError("run_local_gap_scenario requires a defected system")
    if not scenario.observables:
        raise ValidationError("scenario has no observables")
    if scenario.geometry != "local_gap":
        scenario = replace(scenario, geometry="local_gap")
    _validate_observables(scenario)
    lw = scenario.system
    lam, dims = lw.lam, lw.dims
    outside = lam.difference(lw.region)
    t0 = time.perf_counter()

    tilde_op = assemble(lw.tilde)
    h_op = assemble_defected(lw)
    gs_tilde = scenario.solver.solve(tilde_op, derive_seed(scenario.seed, "solver", 2))
    gs_h = scenario.solver.solve(h_op, derive_seed(scenario.seed, "solver", 0))
    rho_tilde = _reference_state(gs_tilde, lam, dims)
    rho_h = _reference_state(gs_h, lam, dims)
    h_branches = _branch_states(gs_h, lam, dims)

    x_support = (
        scenario.perturbation.support
        if scenario.perturbation is not None
        else SiteSet.from_sites([], nu=lam.nu)
    )
    aux = lambda region: set_distance(region, outside)

    # the defect curve compares states that do not involve P, so its decay is
    # controlled by the defect distance alone
    records = _emit_records(
        scenario,
        curve="defect",
        branches=h_branches,
        reference=rho_tilde,
        x_support=x_support,
        aux_region_distance=aux,
        gap_h=gs_tilde.gap_above,
        gap_hp=gs_h.gap_above,
        resid=max(
            float(np.max(gs_tilde.result.residual_norms)),
            float(np.max(gs_h.result.residual_norms)),
        ),
        fit_distance_fn=lambda yx, aux_d: aux_d,
    )
    diagnostics = {
        "solve_tilde": gs_tilde.result.diagnostics(),
        "solve_h": gs_h.result.diagnostics(),
    }
    # without P the headline comparison is clean-vs-defected; with P it is
    # defected-vs-perturbed
    gap_h, gap_hp = gs_tilde.gap_above, gs_h.gap_above

    if scenario.perturbation is not None:
        hp_op = assemble_defected(lw, scenario.perturbation)
        gs_hp = scenario.solver.solve(hp_op, derive_seed(scenario.seed, "solver", 1))
        hp_branches = _branch_states(gs_hp, lam, dims)
        resid = max(
            float(np.max(gs_h.result.residual_norms)),
            float(np.max(gs_hp.result.residual_norms)),
            float(np.max(gs_tilde.result.residual_norms)),
        )
        records += _emit_records(
            scenario,
            curve="main",
            branches=hp_branches,
            reference=rho_h,
            x_support=x_support,
            aux_region_distance=aux,
            gap_h=gs_h.gap_above,
            gap_hp=gs_hp.gap_above,
            resid=resid,
        )
        records += _emit_records(
            scenario,
            curve="p_vs_tilde",
            branches=hp_branches,
            reference=rho_tilde,
            x_support=x_support,
            aux_region_distance=aux,
            gap_h=gs_tilde.gap_above,
            gap_hp=gs_hp.gap_above,
            resid=resid,
        )
        diagnostics["solve_hp"] = gs_hp.result.diagnostics()
        gap_h, gap_hp = gs_h.gap_above, gs_hp.gap_above

    diagnostics["wall_time"] = time.perf_counter() - t0
    return ScenarioOutcome(records, gap_h, gap_hp, diagnostics)


@dataclass
class DecayFit:
    """Least-squares exponential-decay fit of an upper discrepancy envelope."""

    c2_hat: float
    c1_hat: float
    r_squared: float
    intercept: float
    n_points: int
    status: str  # "ok" | "non_decaying" | "below_noise_floor"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def fit_decay(
    records: Sequence[LpplRecord],
    value_field: str = "discrepancy_obs",
    noise_floor: float = NOISE_FLOOR,
    min_distance: float | None = None,
    max_distance: float | None = None,
    size_regressor: bool | None = None,
) -> DecayFit:
    """Fit log(envelope) against the controlling distance.

    The envelope is the max of the chosen discrepancy over records sharing a
    (distance, |Y|) pair; points at or below the noise floor are dropped.  The
    slope gives -c2_hat; when |Y| varies (or ``size_regressor`` forces it), it
    enters as a second regressor whose coefficient is c1_hat.
    """
    if min_distance is None:
        min_distance = -math.inf
    if max_distance is None:
        max_distance = math.inf
    envelope: dict[tuple[float, int], float] = {}
    n_considered = 0
    for rec in records:
        d = rec.fit_distance
        if not (min_distance <= d <= max_distance) or not math.isfinite(d):
            continue
        n_considered += 1
        key = (d, rec.abs_y)
        value = getattr(rec, value_field)
        envelope[key] = max(envelope.get(key, 0.0), value)
    if n_considered == 0:
        raise ValidationError("no records inside the requested distance range")
    usable = {k: v for k, v in envelope.items() if v > noise_floor}
    if not usable:
        return DecayFit(math.nan, 0.0, math.nan, math.nan, 0, "below_noise_floor")
    distances = np.array([k[0] for k in usable])
    sizes = np.array([k[1] for k in usable], dtype=float)
    values = np.log(np.array(list(usable.values())))
    if len(set(distances.tolist())) < 3:
        raise ValidationError(
            f"too few usable points for a decay fit ({len(set(distances.tolist()))} distinct distances)"
        )
    use_size = size_regressor if size_regressor is not None else len(set(sizes.tolist())) > 1
    cols = [np.ones_like(distances), distances] + ([sizes] if use_size else [])
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    predicted = design @ coef
    ss_res = float(np.sum((values - predicted) ** 2))
    ss_tot = float(np.sum((values - np.mean(values)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-20 else 0.0)
    c2_hat = -float(coef[1])
    c1_hat = float(coef[2]) if use_size else 0.0
    status = "ok" if c2_hat > 1e-12 else "non_decaying"
    return DecayFit(
        c2_hat=c2_hat,
        c1_hat=c1_hat,
        r_squared=r2,
        intercept=float(coef[0]),
        n_points=len(usable),
        status=status,
    )


@dataclass
class GapClosingReport:
    gap_h: float
    gap_hp: float
    ratio: float
    fit: DecayFit
    n_records: int

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["fit"] = self.fit.to_dict()
        return out


def gap_closing_certificate(
    scenario: LpplScenario,
    value_field: str = "discrepancy_obs",
    min_distance: float | None = None,
    max_distance: float | None = None,
    noise_floor: float = NOISE_FLOOR,
) -> GapClosingReport:
    """Run a scenario and report (gap of H, gap of H+P, fitted decay).

    Used to demonstrate that the decay persists when the perturbation closes
    the spectral gap.  The fit uses the worst branch implicitly, since the
    envelope is taken over all branch records.
    """
    outcome = run_scenario(scenario)
    if min_distance is None:
        min_distance = 2 * scenario.interaction_range + 1
    fit = fit_decay(
        outcome.records,
        value_field=value_field,
        min_distance=min_distance,
        max_distance=max_distance,
        noise_floor=noise_floor,
    )
    ratio = outcome.gap_hp / outcome.gap_h if outcome.gap_h > 0 else math.inf
    return GapClosingReport(
        gap_h=outcome.gap_h,
        gap_hp=outcome.gap_hp,
        ratio=ratio,
        fit=fit,
        n_records=len(outcome.records),
    )


# ---------------------------------------------------------------------------
# canonical builders


def chain_system(n: int = 12, s: float = 0.1, g: float = 1.0, origin: int = 0) -> SpinSystem:
    """Preset chain: gapped projector on-site terms plus s sigma_x sigma_x
    nearest-neighbor couplings, R = 1."""
    lam = SiteSet.from_box([[origin, origin + n - 1]])
    onsite = uniform_onsite(lam, g)
    return build_system(lam, onsite, xx_chain_interactions(lam, s), interaction_range=1, gap=g)


def pauli_site_observables(lam: SiteSet, sites, axis: str = "z") -> tuple[LocalOperator, ...]:
    mat = pauli(axis)
    return tuple(single_site_operator(tuple(s) if not isinstance(s, tuple) else s, mat) for s in sites)


def canonical_scenario(
    n: int = 12,
    s: float = 0.1,
    g: float = 1.0,
    p_scale: float = 3.0,
    observable_sites: Sequence[int] | None = None,
    solver: SolverSettings | None = None,
    seed: int = 1,
    scenario_id: str = "canonical",
) -> LpplScenario:
    """The version-pinned scenario: chain of n sites, perturbation p * sigma_x
    on the left edge, sigma_z observables along the chain."""
    from .system import pauli_perturbation

    system = chain_system(n=n, s=s, g=g)
    if observable_sites is None:
        observable_sites = range(3, n)
    observables = pauli_site_observables(system.lam, [(j,) for j in observable_sites], axis="z")
    return LpplScenario(
        scenario_id=scenario_id,
        system=system,
        perturbation=pauli_perturbation((0,), "x", p_scale),
        observables=observables,
        geometry="perturbation",
        solver=solver if solver is not None else SolverSettings(tol=1e-11),
        seed=seed,
    )


def gap_closing_perturbation(system: SpinSystem, site, split: float) -> Perturbation:
    """Perturbation that nearly closes the gap of a preset chain.

    P = -h_site - (split / 2) sigma_x cancels the on-site term at ``site``;
    for the sigma_x sigma_x chain the freed spin then labels two exactly
    decoupled sectors whose ground energies differ by exactly ``split`` (the
    sectors are swapped by flipping sigma_z on every other site, a symmetry of
    all remaining terms).  The perturbed gap is therefore ``split`` up to the
    sector-internal excitation scale.
    """
    site = tuple(site)
    h_term = next((t for t in system.onsite if t.site == site), None)
    if h_term is None:
        raise ValidationError(f"site {site} not in the system")
    dim = h_term.h.matrix.shape[0]
    if dim != 2:
        raise ValidationError("gap-closing construction needs a two-level site")
    matrix = -h_term.h.matrix - (split / 2.0) * pauli("x")
    return Perturbation(single_site_operator(site, matrix))


def kernel_pair_defect(
    system: SpinSystem,
    defect_sites: SiteSet,
    scale: float,
    split: float,
    rng: np.random.Generator,
) -> LocalOperator:
    """Strong Hermitian defect with an engineered near-degenerate ground pair.

    Cancels the system's own terms inside the defect block and replaces them
    by scale * (1 - P), where P projects onto two random product-structured
    vectors sharing their factor on the half of the block nearest the rest of
    the lattice.  The pair is split by ``split`` explicitly; everything else
    in the block is pushed up by ``scale``.  The resulting defected system has
    a tiny spectral gap while remaining weakly interacting elsewhere.
    """
    from .operators import embed_sum

    sites = defect_sites.sites
    if len(sites) < 2:
        raise ValidationError("kernel-pair defect needs at least two sites")
    dims_by_site = system.site_dims()
    dims = tuple(dims_by_site[s] for s in sites)
    n_head = max(1, len(sites) // 2)
    head_dim = math.prod(dims[:n_head])
    tail_dim = math.prod(dims[n_head:])
    if tail_dim < 2:
        raise ValidationError("kernel-pair defect needs a tail factor of dimension >= 2")

    def unit(dim_):
        v = rng.standard_normal(dim_) + 1j * rng.standard_normal(dim_)
        return v / np.linalg.norm(v)

    w = unit(head_dim)
    a = unit(tail_dim)
    b = unit(tail_dim)
    b = b - (a.conj() @ b) * a
    b = b / np.linalg.norm(b)
    u = np.kron(w, a)
    v = np.kron(w, b)

    # internal part of the system inside the block: on-site terms plus
    # interactions fully supported there
    internal = [t.h for t in system.onsite if t.site in defect_sites]
    internal += [t.phi for t in system.interactions if t.phi.support.is_subset(defect_sites)]
    block = embed_sum(internal, defect_sites, dims).dense()

    proj = np.outer(u, u.conj()) + np.outer(v, v.conj())
    dim = head_dim * tail_dim
    matrix = scale * (np.eye(dim) - proj) - block
    matrix += (split / 2.0) * (np.outer(v, v.conj()) - np.outer(u, u.conj()))
    return LocalOperator.create(defect_sites, matrix, dims, hermitian=True)
