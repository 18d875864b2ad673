"""Command-line front end.

Subcommands: ``run`` (execute the configured scenario or sweep grid),
``sweep`` (alias of run), ``check`` (ground-state certification batteries),
``plot`` (render decay curves from a results file), ``version``.

Exit codes: 0 success, 1 validation error, 2 solver error, 3 I/O error.
All randomness flows from the config's root seed (overridable with --seed);
reruns with identical seeds produce byte-identical CSV numeric fields.
"""

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from . import __version__
from .config import (
    CSV_COLUMNS,
    dump_config,
    expand_sweep,
    load_config,
    resolve_config,
    scenario_from_config,
)
from .errors import SolverError, ValidationError
from .eigen import dense_eigenpairs
from .experiments import fit_decay, run_local_gap_scenario, run_scenario
from .lattice import SiteSet, bulk
from .states import DensityState, bulk_ground_state_test, ground_state_commutator_test
from .system import LocallyWeakSystem, assemble, assemble_defected, restrict

ENV_OUT_DIR = "LPPLLAB_OUT_DIR"
ENV_WORKERS = "LPPLLAB_WORKERS"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3


def _format_number(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "inf" if math.isinf(value) else repr(value)


def _format_distance(value) -> str:
    value = float(value)
    if math.isinf(value):
        return "inf"
    return str(int(value))


def _csv_row(rec: dict) -> list[str]:
    scenario_id = rec["scenario_id"] if rec["curve"] == "main" else f"{rec['scenario_id']}#{rec['curve']}"
    return [
        scenario_id,
        str(rec["n_sites"]),
        _format_number(rec["strength"]),
        _format_number(rec["p_scale"]),
        str(rec["branch"]),
        _format_distance(rec["dist_yx"]),
        _format_distance(rec["dist_aux"]),
        str(rec["abs_y"]),
        _format_number(rec["discrepancy_obs"]),
        _format_number(rec["discrepancy_tracenorm"]),
        _format_number(rec["gap_h"]),
        _format_number(rec["gap_hp"]),
        _format_number(rec["resid"]),
        str(rec["seed"]),
    ]


def _run_cell(cfg: dict, dense_oracle: bool = False) -> dict:
    """Execute one resolved config cell; returns a JSON-ready dict."""
    scenario = scenario_from_config(cfg)
    if isinstance(scenario.system, LocallyWeakSystem):
        outcome = run_local_gap_scenario(scenario)
    else:
        outcome = run_scenario(scenario)

    if dense_oracle:
        _dense_cross_check(scenario, cfg)

    fit_cfg = cfg["fit"]
    min_distance = fit_cfg["min_distance"]
    if min_distance is None:
        min_distance = 2 * scenario.interaction_range + 1
    fits = {}
    for curve in sorted({r.curve for r in outcome.records}):
        curve_records = [r for r in outcome.records if r.curve == curve]
        try:
            fit = fit_decay(
                curve_records,
                value_field=fit_cfg["value"],
                noise_floor=fit_cfg["noise_floor"],
                min_distance=min_distance,
                max_distance=fit_cfg["max_distance"],
            )
            fits[curve] = fit.to_dict()
        except ValidationError as exc:
            fits[curve] = {"status": "unfitted", "reason": str(exc)}
    return {
        "scenario_id": scenario.scenario_id,
        "geometry": scenario.geometry,
        "n_sites": len(scenario.lam),
        "strength": scenario.strength,
        "range": scenario.interaction_range,
        "seed": scenario.seed,
        "gap_h": outcome.gap_h,
        "gap_hp": outcome.gap_hp,
        "fit_value": fit_cfg["value"],
        "fits": fits,
        "diagnostics": outcome.diagnostics,
        "records": [r.to_dict() for r in outcome.records],
    }


def _dense_cross_check(scenario, cfg) -> None:
    """Force a dense-diagonalization comparison of the Krylov ground energies."""
    if isinstance(scenario.system, LocallyWeakSystem):
        ops = [assemble_defected(scenario.system, None)]
        if scenario.perturbation is not None:
            ops.append(assemble_defected(scenario.system, scenario.perturbation))
    else:
        ops = [assemble(scenario.system)]
        if scenario.perturbation is not None:
            ops.append(assemble(scenario.system, scenario.perturbation))
    for op in ops:
        if op.dim > 1024:
            print(f"dense oracle skipped: dimension {op.dim} > 1024")
            continue
        from .seeds import derive_seed

        krylov = scenario.solver.solve(op, derive_seed(scenario.seed, "oracle"))
        dense = dense_eigenpairs(op, k=1)
        delta = abs(krylov.energy - dense.ground_energy)
        if delta > 1e-7:
            raise SolverError(f"dense oracle mismatch: |dE0| = {delta:.3e}")
        print(f"dense oracle ok: |dE0| = {delta:.3e} (dim {op.dim})")


def _resolve_out_dir(args, cfg) -> str:
    if getattr(args, "out_dir", None):
        return args.out_dir
    env = os.environ.get(ENV_OUT_DIR)
    if env:
        return env
    return cfg["output"]["out_dir"]


def _resolve_workers(args) -> int:
    if getattr(args, "workers", None):
        return max(1, args.workers)
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{ENV_WORKERS} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        raw = copy.deepcopy(cfg)
        raw["seed"] = args.seed
        cfg = resolve_config(raw)
    out_dir = _resolve_out_dir(args, cfg)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, cfg["output"]["resolved_config"]), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))

    cells = expand_sweep(cfg)
    workers = _resolve_workers(args)
    runner = partial(_run_cell, dense_oracle=args.dense_oracle)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(runner, cells))
    else:
        results = [runner(cell) for cell in cells]

    csv_path = os.path.join(out_dir, cfg["output"]["csv"])
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for cell_result in results:
            for rec in cell_result["records"]:
                fh.write(",".join(_csv_row(rec)) + "\n")

    records_path = os.path.join(out_dir, cfg["output"]["records"])
    payload = {
        "schema_version": cfg["schema_version"],
        "package_version": __version__,
        "cells": results,
    }
    with open(records_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")

    for cell_result in results:
        for curve, fit in sorted(cell_result["fits"].items()):
            if fit.get("status") in ("ok", "non_decaying"):
                print(
                    f"{cell_result['scenario_id']} [{curve}]: c2_hat={fit['c2_hat']:.4f} "
                    f"r2={fit['r_squared']:.4f} n={fit['n_points']} ({fit['status']})"
                )
            else:
                print(f"{cell_result['scenario_id']} [{curve}]: {fit.get('status')}")
    print(f"wrote {csv_path} and {records_path}")
    return EXIT_OK


def _excited_probe(h_op, offset: float, solver, seed: int):
    """Debug state with energy E0 + offset, for exercising the FAIL path."""
    from .seeds import derive_seed

    if h_op.dim <= 1024:
        dense = dense_eigenpairs(h_op, k=h_op.dim)
        energies, vectors = dense.energies, dense.vectors
    else:
        res = solver.solve(h_op, derive_seed(seed, "excite"))
        energies, vectors = res.result.energies, res.result.vectors
    e0 = energies[0]
    target = None
    for j in range(1, len(energies)):
        if energies[j] >= e0 + offset:
            target = j
            break
    if target is None:
        raise ValidationError(f"no level at least {offset} above the ground energy")
    weight = offset / (energies[target] - e0)
    vec = math.sqrt(1.0 - weight) * vectors[0] + math.sqrt(weight) * vectors[target]
    return vec / np.linalg.norm(vec)


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        raw = copy.deepcopy(cfg)
        raw["seed"] = args.seed
        cfg = resolve_config(raw)
    scenario = scenario_from_config(cfg)
    check_cfg = cfg["check"]
    seed = scenario.seed

    if isinstance(scenario.system, LocallyWeakSystem):
        base_system = scenario.system.tilde
        h_op = assemble_defected(scenario.system, scenario.perturbation)
        extra_support = scenario.system.defect.support
    else:
        base_system = scenario.system
        h_op = assemble(scenario.system, scenario.perturbation)
        extra_support = SiteSet.from_sites([], nu=scenario.lam.nu)

    from .seeds import derive_seed

    gs = scenario.solver.solve(h_op, derive_seed(seed, "check"))
    lam, dims = scenario.lam, base_system.dims
    if args.excite_offset is not None:
        vec = _excited_probe(h_op, args.excite_offset, scenario.solver, seed)
        rho = DensityState.pure(vec, lam, dims)
        print(f"probing a state at E0 + {args.excite_offset}")
    elif gs.dimension == 1:
        rho = DensityState.pure(gs.basis[0], lam, dims)
    else:
        rho = DensityState.uniform_mixture(gs.basis, lam, dims)

    report = ground_state_commutator_test(
        rho,
        h_op,
        trials=check_cfg["trials"],
        seed=derive_seed(seed, "battery", 0),
        tol=check_cfg["tol"],
        hop_levels=check_cfg["hop_levels"],
        adversarial_restarts=check_cfg["adversarial_restarts"],
    )
    status = "PASS" if report.passed else "FAIL"
    print(f"commutator battery: {status} (min {report.min_value:.3e}, tol {report.tol:g})")
    if not report.passed and report.witness is not None:
        print(f"  witness: {json.dumps(report.witness)[:400]}")

    removed = scenario.perturbation.support if scenario.perturbation is not None else SiteSet.from_sites([], nu=lam.nu)
    removed = removed.union(extra_support)
    lam_star = lam.difference(removed)
    restricted = restrict(base_system, lam_star) if len(lam_star) > 0 else None
    if restricted is None or len(bulk(lam_star, base_system.interaction_range)) == 0:
        print("bulk battery: skipped (empty bulk: restricted region too small for this range)")
    else:
        bulk_report = bulk_ground_state_test(
            rho,
            restricted,
            trials=check_cfg["trials"],
            seed=derive_seed(seed, "battery", 1),
            tol=check_cfg["tol"],
            adversarial_restarts=check_cfg["adversarial_restarts"],
        )
        status = "PASS" if bulk_report.passed else "FAIL"
        print(f"bulk battery: {status} (min {bulk_report.min_value:.3e}, tol {bulk_report.tol:g})")
        if not bulk_report.passed and bulk_report.witness is not None:
            print(f"  witness: {json.dumps(bulk_report.witness)[:400]}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import emit_plots, load_results

    results = load_results(args.results)
    out_dir = args.out_dir or os.environ.get(ENV_OUT_DIR) or os.path.join(
        os.path.dirname(os.path.abspath(args.results)), "plots"
    )
    written = emit_plots(results, out_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"lppllab {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lppllab",
        description="ground-state locality experiments for weakly interacting spin systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the YAML experiment config")
        p.add_argument("--out-dir", default=None, help=f"output directory (env {ENV_OUT_DIR})")
        p.add_argument("--workers", type=int, default=None, help=f"worker processes (env {ENV_WORKERS})")
        p.add_argument("--seed", type=int, default=None, help="override the config root seed")
        p.add_argument(
            "--dense-oracle",
            action="store_true",
            help="cross-check Krylov ground energies against dense diagonalization when dimension permits",
        )

    p_run = sub.add_parser("run", help="run the configured scenario (and sweep grid, if any)")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="alias of run")
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="run ground-state certification batteries")
    add_common(p_check)
    p_check.add_argument(
        "--excite-offset",
        type=float,
        default=None,
        help="debug: certify a state at E0 + offset instead of the ground state",
    )
    p_check.set_defaults(func=cmd_check)

    p_plot = sub.add_parser("plot", help="render decay plots from a results file")
    p_plot.add_argument("results", help="path to the records JSON written by run")
    p_plot.add_argument("--out-dir", default=None, help="plot output directory")
    p_plot.set_defaults(func=cmd_plot)

    p_version = sub.add_parser("version", help="print the package version")
    p_version.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
