"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.
"""

import json
import math
import os
import time

import numpy as np
import yaml

from lppllab.cli import main
from lppllab.config import dump_config, resolve_config
from lppllab.eigen import dense_eigenpairs, ground_space, lowest_eigenpairs
from lppllab.experiments import (
    LpplScenario,
    SolverSettings,
    canonical_scenario,
    chain_system,
    fit_decay,
    gap_closing_certificate,
    gap_closing_perturbation,
    kernel_pair_defect,
    pauli_site_observables,
    run_local_gap_scenario,
    run_scenario,
)
from lppllab.lattice import SiteSet, bulk, bulk_distance_identity_check
from lppllab.operators import random_local_operator
from lppllab.seeds import derive_rng
from lppllab.states import DensityState, bulk_ground_state_test, ground_state_commutator_test
from lppllab.system import (
    Perturbation,
    assemble,
    build_locally_weak_system,
    build_system,
    pauli_perturbation,
    random_ball_interactions,
    restrict,
    uniform_onsite,
)


def report(number: int, name: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {number} ({name}): {'PASS' if ok else 'FAIL'} -- {detail}")
    assert ok, f"criterion {number} ({name}) failed: {detail}"


def _random_system(seed: int, max_sites: int, strength_range=(0.05, 0.4)):
    rng = derive_rng(seed, "accept-system")
    if max_sites >= 8 and rng.integers(0, 4) == 3:
        shapes = [((0, 1), (0, 3)), ((0, 1), (0, 4)), ((0, 2), (0, 2))]
        lam = SiteSet.from_box(shapes[rng.integers(len(shapes))])
    else:
        n = int(rng.integers(min(4, max_sites), max_sites + 1))
        lam = SiteSet.from_box([[0, n - 1]])
    ground = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    onsite = uniform_onsite(lam, 1.0, ground)
    s = float(rng.uniform(*strength_range))
    interactions = random_ball_interactions(lam, 1, s, rng)
    return build_system(lam, onsite, interactions, 1, 1.0)


def test_acceptance_1_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        system = _random_system(1000 + i, max_sites=10)
        h_op = assemble(system)
        assert h_op.dim <= 1024
        krylov = lowest_eigenpairs(h_op, k=1, tol=1e-10, seed=i)
        dense = dense_eigenpairs(h_op, k=1)
        worst = max(worst, abs(krylov.ground_energy - dense.ground_energy))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= 120.0
    report(1, "oracle equivalence", ok, f"worst |dE0| = {worst:.2e}, {elapsed:.0f}s for 50 systems")


def test_acceptance_2_exponential_decay():
    t0 = time.perf_counter()
    scenario = canonical_scenario(
        n=12, s=0.1, g=1.0, p_scale=3.0, observable_sites=range(3, 12), seed=2024
    )
    outcome = run_scenario(scenario)
    fit = fit_decay(outcome.records, min_distance=3, max_distance=9)
    env = {}
    for rec in outcome.records:
        env[rec.fit_distance] = max(env.get(rec.fit_distance, 0.0), rec.discrepancy_obs)
    ratio = env[9.0] / env[3.0]
    elapsed = time.perf_counter() - t0
    ok = fit.c2_hat > 0 and fit.r_squared >= 0.9 and ratio <= 0.1 and elapsed <= 300.0
    report(
        2,
        "exponential decay",
        ok,
        f"c2_hat = {fit.c2_hat:.3f}, r2 = {fit.r_squared:.4f}, d9/d3 = {ratio:.2e}, {elapsed:.0f}s",
    )


def test_acceptance_3_gap_closing_robustness():
    system = chain_system(n=12, s=0.1, g=1.0)
    perturbation = gap_closing_perturbation(system, (0,), split=1e-4)
    scenario = LpplScenario(
        scenario_id="gap-closing",
        system=system,
        perturbation=perturbation,
        observables=pauli_site_observables(system.lam, [(j,) for j in range(3, 12)]),
        solver=SolverSettings(k=4, tol=1e-11),
        seed=31,
    )
    cert = gap_closing_certificate(scenario, min_distance=3, max_distance=9)
    ok = (
        cert.gap_hp < 1e-3 * cert.gap_h
        and cert.fit.c2_hat > 0
        and cert.fit.r_squared >= 0.85
    )
    report(
        3,
        "gap-closing robustness",
        ok,
        f"gap(H) = {cert.gap_h:.3f}, gap(H+P) = {cert.gap_hp:.2e}, "
        f"c2_hat = {cert.fit.c2_hat:.3f}, r2 = {cert.fit.r_squared:.4f}",
    )


def test_acceptance_4_ground_state_characterization():
    n_systems = 50
    refuted = 0
    worst_min = 0.0
    for i in range(n_systems):
        system = _random_system(4000 + i, max_sites=6, strength_range=(0.05, 0.2))
        h_op = assemble(system)
        dense = dense_eigenpairs(h_op, k=h_op.dim)
        rho = DensityState.pure(dense.vectors[0], system.lam, system.dims)
        rep = ground_state_commutator_test(
            rho, h_op, trials=200, seed=500 + i, tol=1e-9, adversarial_restarts=200
        )
        assert rep.passed, f"minimizer battery failed on system {i}: min = {rep.min_value:.3e}"
        worst_min = min(worst_min, rep.min_value)

        # a state at E0 + 0.1 must be refuted by the battery
        e0 = dense.energies[0]
        target = next(j for j in range(1, h_op.dim) if dense.energies[j] >= e0 + 0.1)
        weight = 0.1 / (dense.energies[target] - e0)
        vec = math.sqrt(1 - weight) * dense.vectors[0] + math.sqrt(weight) * dense.vectors[target]
        rho_exc = DensityState.pure(vec, system.lam, system.dims)
        rep_exc = ground_state_commutator_test(
            rho_exc, h_op, trials=200, seed=600 + i, tol=1e-9, stop_below=-1e-6
        )
        if rep_exc.min_value < -1e-6:
            refuted += 1
    ok = worst_min >= -1e-9 and refuted >= math.ceil(0.95 * n_systems)
    report(
        4,
        "ground-state characterization",
        ok,
        f"worst battery min = {worst_min:.2e}, refuted {refuted}/{n_systems}",
    )


def test_acceptance_5_bulk_machinery():
    worst_min = 0.0
    for i in range(20):
        rng = derive_rng(7000 + i, "bulk-sys")
        lam = SiteSet.from_box([[0, 7]])
        ground = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        system = build_system(
            lam,
            uniform_onsite(lam, 1.0, ground),
            random_ball_interactions(lam, 1, float(rng.uniform(0.05, 0.2)), rng),
            1,
            1.0,
        )
        x_site = SiteSet.from_sites([(7,)])
        p_op = random_local_operator(x_site, rng, hermitian=True, norm=float(rng.uniform(0.5, 3.0)))
        gs = ground_space(assemble(system, Perturbation(p_op)), k=2, tol=1e-10, seed=800 + i)
        rho = DensityState.pure(gs.basis[0], system.lam, system.dims)
        restricted = restrict(system, lam.difference(x_site))
        rep = bulk_ground_state_test(rho, restricted, trials=200, seed=900 + i, tol=1e-9)
        assert rep.passed, f"bulk battery failed on chain {i}: min = {rep.min_value:.3e}"
        worst_min = min(worst_min, rep.min_value)

    # distance identity on 100 random geometries
    rng = np.random.default_rng(71000)
    checked = 0
    while checked < 100:
        nu = int(rng.integers(1, 3))
        if nu == 1:
            lam = SiteSet.from_box([[0, int(rng.integers(10, 26))]])
        else:
            lam = SiteSet.from_box([[0, int(rng.integers(4, 9))], [0, int(rng.integers(4, 9))]])
        r = int(rng.integers(1, 3))
        x = SiteSet.from_sites(
            [lam.sites[int(rng.integers(len(lam)))] for _ in range(int(rng.integers(1, 4)))]
        )
        inner = bulk(lam.difference(x), r)
        if len(inner) == 0:
            continue
        n_y = int(rng.integers(1, 3))
        y = SiteSet.from_sites([inner.sites[int(rng.integers(len(inner)))] for _ in range(n_y)])
        lhs, rhs = bulk_distance_identity_check(y, x, lam, r)
        assert lhs == rhs, f"distance identity violated: {lhs} != {rhs}"
        checked += 1
    report(
        5,
        "bulk machinery",
        True,
        f"20 bulk batteries passed (worst min = {worst_min:.2e}), 100 identity checks exact",
    )


def test_acceptance_6_local_gap_decay():
    system = chain_system(n=12, s=0.1, g=1.0)
    region = SiteSet.from_box([[0, 7]])
    defect_sites = SiteSet.from_box([[8, 11]])
    q = kernel_pair_defect(system, defect_sites, scale=20.0, split=1e-3, rng=derive_rng(61, "q"))
    lw = build_locally_weak_system(system, region, q)
    observables = pauli_site_observables(system.lam, [(j,) for j in range(6)])
    solver = SolverSettings(k=4, tol=1e-11)

    # P = 0: trace-norm discrepancy between ground states of tilde_H and
    # tilde_H + Q decays in the distance to the defect region
    scen0 = LpplScenario(
        scenario_id="local-gap",
        system=lw,
        perturbation=None,
        observables=observables,
        geometry="local_gap",
        solver=solver,
        seed=62,
    )
    outcome0 = run_local_gap_scenario(scen0)
    defect_records = [r for r in outcome0.records if r.curve == "defect"]
    fit = fit_decay(defect_records, value_field="discrepancy_tracenorm", min_distance=3)
    gap_tilde = defect_records[0].gap_h
    gap_defected = defect_records[0].gap_hp
    decay_ok = fit.c2_hat > 0 and fit.r_squared >= 0.85

    # triangle consistency with P present
    scen_p = LpplScenario(
        scenario_id="local-gap-p",
        system=lw,
        perturbation=pauli_perturbation((0,), "x", 2.0),
        observables=observables,
        geometry="local_gap",
        solver=solver,
        seed=63,
    )
    outcome_p = run_local_gap_scenario(scen_p)
    main_recs = {(r.branch, r.observable): r for r in outcome_p.records if r.curve == "main"}
    p_vs_tilde = {(r.branch, r.observable): r for r in outcome_p.records if r.curve == "p_vs_tilde"}
    base = {r.observable: r for r in outcome_p.records if r.curve == "defect" and r.branch == 0}
    triangle_ok = True
    worst_slack = -math.inf
    for key, rec in main_recs.items():
        slack = rec.discrepancy_obs - (
            p_vs_tilde[key].discrepancy_obs + base[key[1]].discrepancy_obs
        )
        worst_slack = max(worst_slack, slack)
        if slack > 1e-10:
            triangle_ok = False
    ok = decay_ok and triangle_ok
    report(
        6,
        "local-gap decay",
        ok,
        f"gap(tilde) = {gap_tilde:.3f}, gap(tilde+Q) = {gap_defected:.2e}, "
        f"c2_hat = {fit.c2_hat:.3f}, r2 = {fit.r_squared:.4f}, "
        f"triangle slack = {worst_slack:.2e}",
    )


def test_acceptance_7_determinism_and_interfaces(tmp_path):
    cfg = {
        "name": "accept7",
        "seed": 99,
        "system": {
            "lattice": {"box": [[0, 5]]},
            "onsite": {"preset": "gapped_projector", "g": 1.0},
            "interactions": {"preset": "random_ball", "strength": 0.15},
            "range": 1,
        },
        "perturbation": {"support": [[0]], "preset": "pauli_x", "scale": 2.0},
        "observables": {"preset": "pauli_z_sites", "sites": [[3], [4], [5]]},
        "solver": {"tol": 1e-10},
    }
    path = tmp_path / "accept7.yaml"
    path.write_text(yaml.safe_dump(cfg))

    # byte-identical CSV numeric fields across reruns with the same seed
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["run", "--config", str(path), "--out-dir", out1, "--workers", "1"]) == 0
    assert main(["run", "--config", str(path), "--out-dir", out2, "--workers", "1"]) == 0
    csv1 = open(os.path.join(out1, "results.csv"), "rb").read()
    csv2 = open(os.path.join(out2, "results.csv"), "rb").read()
    deterministic = csv1 == csv2

    # config round-trip fixed point
    resolved = resolve_config(cfg)
    round_trip = resolve_config(yaml.safe_load(dump_config(resolved))) == resolved

    # exit-code contract on three constructed failures
    bad_geom = json.loads(json.dumps(cfg))
    bad_geom["geometry"] = "local_gap"
    bad_geom["defect"] = {
        "region": {"box": [[0, 2]]},
        "support": [[5]],
        "preset": "random_block",
        "scale": 5.0,
    }
    bad_path = tmp_path / "bad.yaml"
    bad_path.write_text(yaml.safe_dump(bad_geom))
    code_validation = main(["run", "--config", str(bad_path), "--out-dir", str(tmp_path / "v")])

    bad_solver = json.loads(json.dumps(cfg))
    bad_solver["solver"] = {"tol": 1e-30, "max_restarts": 2}
    solver_path = tmp_path / "solver.yaml"
    solver_path.write_text(yaml.safe_dump(bad_solver))
    code_solver = main(
        ["run", "--config", str(solver_path), "--out-dir", str(tmp_path / "s"), "--workers", "1"]
    )

    code_io = main(["run", "--config", str(tmp_path / "does_not_exist.yaml")])

    codes_ok = (code_validation, code_solver, code_io) == (1, 2, 3)
    ok = deterministic and round_trip and codes_ok
    report(
        7,
        "determinism & interfaces",
        ok,
        f"deterministic CSV: {deterministic}, round-trip: {round_trip}, "
        f"exit codes: {(code_validation, code_solver, code_io)}",
    )
