"""Declarative experiment configuration.

Configs are YAML files with nested blocks.  ``resolve_config`` validates a
raw mapping and materializes every default into a canonical, YAML-stable form
(the resolved config re-parses to itself, which the CLI relies on when echoing
the configuration it actually ran).  ``scenario_from_config`` turns a resolved
config into a runnable scenario.

Site sets are given either as explicit coordinate lists (``sites``) or as a
box of inclusive integer ranges (``box``).  Matrices are nested lists whose
entries are numbers or [real, imag] pairs.
"""

import copy
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ValidationError
from .experiments import (
    LpplScenario,
    SolverSettings,
    kernel_pair_defect,
    pauli_site_observables,
)
from .lattice import SiteSet
from .operators import LocalOperator, ladder, pauli, projector, single_site_operator
from .seeds import derive_rng
from .system import (
    LocallyWeakSystem,
    Perturbation,
    SpinSystem,
    build_locally_weak_system,
    build_system,
    gapped_projector_onsite,
    random_ball_interactions,
    xx_chain_interactions,
)

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "scenario_id",
    "N",
    "s",
    "p_scale",
    "branch",
    "dist_YX",
    "dist_Y_defect",
    "abs_Y",
    "discrepancy_obs",
    "discrepancy_tracenorm",
    "gap_H",
    "gap_HP",
    "resid",
    "seed",
]

_DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "name": "experiment",
    "seed": 1,
    "geometry": "perturbation",
    "solver": {
        "k": 4,
        "tol": 1e-10,
        "max_basis": 80,
        "max_restarts": 200,
        "degeneracy_tol": None,
    },
    "perturbation": None,
    "defect": None,
    "check": {
        "trials": 200,
        "adversarial_restarts": 200,
        "hop_levels": 12,
        "tol": 1e-9,
    },
    "fit": {
        "value": "discrepancy_obs",
        "noise_floor": 1e-12,
        "min_distance": None,
        "max_distance": None,
    },
    "sweep": {},
    "output": {
        "out_dir": "out",
        "csv": "results.csv",
        "records": "records.json",
        "resolved_config": "config_resolved.yaml",
        "plots_dir": "plots",
    },
}

_GEOMETRIES = ("perturbation", "local_gap", "bulk")


def _fail(path: str, message: str):
    raise ValidationError(f"config {path}: {message}")


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, Mapping):
        _fail(path, f"expected a mapping, got {type(value).__name__}")
    return dict(value)


def _merge_defaults(raw: Mapping, defaults: Mapping, path: str) -> dict:
    out = {}
    for key, default in defaults.items():
        if key in raw and raw[key] is not None and isinstance(default, Mapping):
            out[key] = _merge_defaults(_expect_mapping(raw[key], f"{path}.{key}"), default, f"{path}.{key}")
        elif key in raw:
            out[key] = copy.deepcopy(raw[key])
        else:
            out[key] = copy.deepcopy(default)
    for key in raw:
        if key not in defaults:
            out[key] = copy.deepcopy(raw[key])
    return out


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        _fail(path, f"expected an integer, got {value!r}")
    return int(value)


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


def _normalize_sites(value, path: str) -> list[list[int]]:
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a non-empty list of coordinate lists")
    out = []
    for i, coords in enumerate(value):
        if isinstance(coords, (int, np.integer)):
            coords = [coords]
        if not isinstance(coords, (list, tuple)) or not coords:
            _fail(f"{path}[{i}]", "expected a coordinate list")
        out.append([_as_int(c, f"{path}[{i}]") for c in coords])
    return sorted(out)


def _normalize_region(block, path: str) -> dict:
    block = _expect_mapping(block, path)
    has_box = block.get("box") is not None
    has_sites = block.get("sites") is not None
    if has_box == has_sites:
        _fail(path, "exactly one of 'box' or 'sites' is required")
    if has_box:
        box = block["box"]
        if not isinstance(box, (list, tuple)) or not box:
            _fail(f"{path}.box", "expected a list of [lo, hi] ranges")
        ranges = []
        for i, r in enumerate(box):
            if not isinstance(r, (list, tuple)) or len(r) != 2:
                _fail(f"{path}.box[{i}]", "expected [lo, hi]")
            lo, hi = _as_int(r[0], f"{path}.box[{i}]"), _as_int(r[1], f"{path}.box[{i}]")
            if hi < lo:
                _fail(f"{path}.box[{i}]", f"empty range [{lo}, {hi}]")
            ranges.append([lo, hi])
        return {"box": ranges}
    return {"sites": _normalize_sites(block["sites"], f"{path}.sites")}


def _region_to_siteset(block: Mapping, nu: int | None = None) -> SiteSet:
    if "box" in block:
        return SiteSet.from_box(block["box"])
    return SiteSet.from_sites([tuple(s) for s in block["sites"]], nu=nu)


def _normalize_matrix(value, path: str) -> list[list[list[float]]]:
    """Canonical matrix form: nested lists of [real, imag] pairs."""
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, "expected a nested list matrix")
    out = []
    for i, row in enumerate(value):
        if not isinstance(row, (list, tuple)) or len(row) != len(value):
            _fail(f"{path}[{i}]", "matrix must be square")
        new_row = []
        for j, entry in enumerate(row):
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    _fail(f"{path}[{i}][{j}]", "complex entries are [real, imag] pairs")
                new_row.append([_as_float(entry[0], path), _as_float(entry[1], path)])
            else:
                new_row.append([_as_float(entry, path), 0.0])
        out.append(new_row)
    return out


def _matrix_to_array(norm_matrix) -> np.ndarray:
    return np.array([[complex(e[0], e[1]) for e in row] for row in norm_matrix], dtype=np.complex128)


_SINGLE_SITE_PRESETS = ("pauli_x", "pauli_y", "pauli_z", "raising", "lowering", "projector")


def _single_site_matrix(preset: str, level: int = 0, dim: int = 2) -> np.ndarray:
    if preset.startswith("pauli_"):
        return pauli(preset)
    if preset in ("raising", "lowering"):
        return ladder(preset, dim)
    if preset == "projector":
        return projector(level, dim)
    raise ValidationError(f"unknown operator preset {preset!r}")


def _normalize_system(block, path: str) -> dict:
    block = _expect_mapping(block, path)
    for key in ("lattice", "onsite", "interactions", "range"):
        if key not in block:
            _fail(path, f"missing required key '{key}'")
    lattice = _normalize_region(block["lattice"], f"{path}.lattice")

    onsite = _expect_mapping(block["onsite"], f"{path}.onsite")
    g = _as_float(onsite.get("g", 1.0), f"{path}.onsite.g")
    if g <= 0:
        _fail(f"{path}.onsite.g", "on-site gap must be positive")
    if onsite.get("matrix") is not None:
        onsite_norm = {"matrix": _normalize_matrix(onsite["matrix"], f"{path}.onsite.matrix"), "g": g}
    else:
        preset = onsite.get("preset", "gapped_projector")
        if preset != "gapped_projector":
            _fail(f"{path}.onsite.preset", f"unknown on-site preset {preset!r}")
        ground = onsite.get("ground_state", [[1.0, 0.0], [0.0, 0.0]])
        if not isinstance(ground, (list, tuple)) or len(ground) < 2:
            _fail(f"{path}.onsite.ground_state", "expected a local vector of length >= 2")
        ground_norm = []
        for i, entry in enumerate(ground):
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    _fail(f"{path}.onsite.ground_state[{i}]", "complex entries are [real, imag] pairs")
                ground_norm.append([_as_float(entry[0], path), _as_float(entry[1], path)])
            else:
                ground_norm.append([_as_float(entry, path), 0.0])
        onsite_norm = {"preset": "gapped_projector", "g": g, "ground_state": ground_norm}

    inter = _expect_mapping(block["interactions"], f"{path}.interactions")
    preset = inter.get("preset", "none")
    if preset not in ("none", "xx_chain", "random_ball"):
        _fail(f"{path}.interactions.preset", f"unknown interaction preset {preset!r}")
    inter_norm = {"preset": preset}
    if preset != "none":
        inter_norm["strength"] = _as_float(inter.get("strength", 0.1), f"{path}.interactions.strength")
        if inter_norm["strength"] < 0:
            _fail(f"{path}.interactions.strength", "strength must be non-negative")

    rng_ = _as_int(block["range"], f"{path}.range")
    if rng_ < 1:
        _fail(f"{path}.range", "interaction range must be >= 1")
    return {"lattice": lattice, "onsite": onsite_norm, "interactions": inter_norm, "range": rng_}


def _normalize_operator_block(block, path: str, default_scale: float = 1.0) -> dict:
    """Support + (preset | matrix) + scale, shared by perturbation/observables."""
    block = _expect_mapping(block, path)
    if "support" not in block:
        _fail(path, "missing required key 'support'")
    support = _normalize_sites(block["support"], f"{path}.support")
    scale = _as_float(block.get("scale", default_scale), f"{path}.scale")
    if block.get("matrix") is not None:
        return {"support": support, "matrix": _normalize_matrix(block["matrix"], f"{path}.matrix"), "scale": scale}
    preset = block.get("preset")
    if preset is None:
        _fail(path, "one of 'preset' or 'matrix' is required")
    if preset not in _SINGLE_SITE_PRESETS:
        _fail(f"{path}.preset", f"unknown operator preset {preset!r}")
    out = {"support": support, "preset": preset, "scale": scale}
    if preset == "projector":
        out["level"] = _as_int(block.get("level", 0), f"{path}.level")
    return out


def _normalize_defect(block, path: str) -> dict:
    block = _expect_mapping(block, path)
    if "region" not in block:
        _fail(path, "missing required key 'region' (the protected region)")
    region = _normalize_region(block["region"], f"{path}.region")
    if "support" not in block:
        _fail(path, "missing required key 'support'")
    support = _normalize_sites(block["support"], f"{path}.support")
    preset = block.get("preset", "random_block")
    if block.get("matrix") is not None:
        return {
            "region": region,
            "support": support,
            "matrix": _normalize_matrix(block["matrix"], f"{path}.matrix"),
        }
    if preset not in ("random_block", "kernel_pair"):
        _fail(f"{path}.preset", f"unknown defect preset {preset!r}")
    out = {
        "region": region,
        "support": support,
        "preset": preset,
        "scale": _as_float(block.get("scale", 20.0), f"{path}.scale"),
    }
    if preset == "kernel_pair":
        out["split"] = _as_float(block.get("split", 1e-3), f"{path}.split")
    return out


def _normalize_observables(block, path: str) -> dict | list:
    if isinstance(block, Mapping):
        preset = block.get("preset")
        if preset not in ("pauli_z_sites", "pauli_x_sites", "pauli_y_sites"):
            _fail(f"{path}.preset", f"unknown observable preset {preset!r}")
        if "sites" not in block:
            _fail(path, "missing required key 'sites'")
        return {"preset": preset, "sites": _normalize_sites(block["sites"], f"{path}.sites")}
    if isinstance(block, (list, tuple)) and block:
        return [_normalize_operator_block(b, f"{path}[{i}]") for i, b in enumerate(block)]
    _fail(path, "expected an observable preset mapping or a non-empty list")


def resolve_config(raw: Mapping) -> dict:
    """Validate a raw config mapping and materialize all defaults.

    The result is canonical: resolving it again is the identity.
    """
    raw = _expect_mapping(raw, "<root>")
    out = _merge_defaults(raw, _DEFAULTS, "<root>")

    version = _as_int(out["schema_version"], "schema_version")
    if version != SCHEMA_VERSION:
        _fail("schema_version", f"unsupported schema version {version} (expected {SCHEMA_VERSION})")
    if not isinstance(out["name"], str) or not out["name"]:
        _fail("name", "expected a non-empty string")
    out["seed"] = _as_int(out["seed"], "seed")
    if out["geometry"] not in _GEOMETRIES:
        _fail("geometry", f"unknown geometry {out['geometry']!r} (one of {_GEOMETRIES})")

    solver = out["solver"]
    solver["k"] = _as_int(solver["k"], "solver.k")
    if solver["k"] < 1:
        _fail("solver.k", "k must be >= 1")
    solver["tol"] = _as_float(solver["tol"], "solver.tol")
    if solver["tol"] <= 0:
        _fail("solver.tol", "tol must be positive")
    solver["max_basis"] = _as_int(solver["max_basis"], "solver.max_basis")
    solver["max_restarts"] = _as_int(solver["max_restarts"], "solver.max_restarts")
    if solver["degeneracy_tol"] is not None:
        solver["degeneracy_tol"] = _as_float(solver["degeneracy_tol"], "solver.degeneracy_tol")

    if "system" not in out or out["system"] is None:
        _fail("system", "missing required block")
    out["system"] = _normalize_system(out["system"], "system")

    if out["perturbation"] is not None:
        out["perturbation"] = _normalize_operator_block(out["perturbation"], "perturbation")
    if out["defect"] is not None:
        out["defect"] = _normalize_defect(out["defect"], "defect")
        if out["geometry"] == "perturbation":
            out["geometry"] = "local_gap"
    elif out["geometry"] == "local_gap":
        _fail("geometry", "local_gap geometry requires a defect block")

    if "observables" not in out or out["observables"] is None:
        _fail("observables", "missing required block")
    out["observables"] = _normalize_observables(out["observables"], "observables")

    check = out["check"]
    for key in ("trials", "adversarial_restarts", "hop_levels"):
        check[key] = _as_int(check[key], f"check.{key}")
    check["tol"] = _as_float(check["tol"], "check.tol")

    fit = out["fit"]
    if fit["value"] not in ("discrepancy_obs", "discrepancy_tracenorm"):
        _fail("fit.value", f"unknown fit value field {fit['value']!r}")
    fit["noise_floor"] = _as_float(fit["noise_floor"], "fit.noise_floor")
    for key in ("min_distance", "max_distance"):
        if fit[key] is not None:
            fit[key] = _as_float(fit[key], f"fit.{key}")

    sweep = _expect_mapping(out["sweep"], "sweep")
    for key, values in sweep.items():
        if not isinstance(values, (list, tuple)) or not values:
            _fail(f"sweep.{key}", "expected a non-empty list of values")
        sweep[key] = list(values)
    out["sweep"] = sweep

    output = out["output"]
    for key in ("out_dir", "csv", "records", "resolved_config", "plots_dir"):
        if not isinstance(output[key], str) or not output[key]:
            _fail(f"output.{key}", "expected a non-empty string")

    # cross-validate by actually building the scenario once
    scenario_from_config(out)
    return out


def load_config(path: str) -> dict:
    """Read and resolve a YAML config file.  I/O errors propagate as OSError."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path}: invalid YAML ({exc})") from exc
    if raw is None:
        raise ValidationError(f"config {path}: empty file")
    return resolve_config(raw)


def dump_config(resolved: Mapping) -> str:
    return yaml.safe_dump(dict(resolved), sort_keys=True, default_flow_style=None)


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            _fail(f"sweep.{dotted}", "path does not exist in the config")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        _fail(f"sweep.{dotted}", "path does not exist in the config")
    node[parts[-1]] = copy.deepcopy(value)


def expand_sweep(resolved: Mapping) -> list[dict]:
    """Cartesian product of the sweep grid, applied to copies of the config.

    Cells are ordered by sorted sweep key, then value order; each cell gets a
    suffixed name and an empty sweep block.
    """
    sweep = resolved.get("sweep", {})
    if not sweep:
        cell = copy.deepcopy(dict(resolved))
        return [cell]
    keys = sorted(sweep.keys())
    cells: list[dict] = []

    def rec(index: int, overrides: list):
        if index == len(keys):
            cell = copy.deepcopy(dict(resolved))
            cell["sweep"] = {}
            tags = []
            for dotted, value in overrides:
                _set_dotted(cell, dotted, value)
                tags.append(f"{dotted.split('.')[-1]}={value}")
            cell["name"] = f"{resolved['name']}[{','.join(tags)}]"
            cells.append(resolve_config(cell))
            return
        for value in sweep[keys[index]]:
            rec(index + 1, overrides + [(keys[index], value)])

    rec(0, [])
    return cells


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved, validated experiment configuration.

    Wraps the canonical mapping; construction always goes through the
    resolver, so every default is materialized and every invariant checked
    before any compute starts.
    """

    data: dict = field(repr=False)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        return cls(load_config(path))

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "ExperimentConfig":
        return cls(resolve_config(raw))

    def cells(self) -> list["ExperimentConfig"]:
        return [ExperimentConfig(cell) for cell in expand_sweep(self.data)]

    def scenario(self):
        return scenario_from_config(self.data)

    def dump(self) -> str:
        return dump_config(self.data)

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def seed(self) -> int:
        return self.data["seed"]


# ---------------------------------------------------------------------------
# building runnable objects from a resolved config


def _build_operator(block: Mapping, lam: SiteSet, dims_by_site: Mapping) -> LocalOperator:
    support = SiteSet.from_sites([tuple(s) for s in block["support"]], nu=lam.nu)
    if not support.is_subset(lam):
        raise ValidationError(f"operator support {block['support']} not contained in the lattice")
    site_dims = tuple(dims_by_site[s] for s in support.sites)
    scale = block.get("scale", 1.0)
    if "matrix" in block:
        mat = scale * _matrix_to_array(block["matrix"])
        return LocalOperator(support, mat, site_dims)
    if len(support) != 1:
        raise ValidationError(f"preset {block['preset']!r} needs a single-site support")
    mat = scale * _single_site_matrix(block["preset"], block.get("level", 0), site_dims[0])
    return LocalOperator(support, mat, site_dims)


def build_spin_system(cfg: Mapping, seed: int) -> SpinSystem:
    sys_cfg = cfg["system"]
    lam = _region_to_siteset(sys_cfg["lattice"])
    onsite_cfg = sys_cfg["onsite"]
    g = onsite_cfg["g"]
    if "matrix" in onsite_cfg:
        mat = _matrix_to_array(onsite_cfg["matrix"])
        onsite = {site: single_site_operator(site, mat) for site in lam.sites}
    else:
        ground = np.array([complex(e[0], e[1]) for e in onsite_cfg["ground_state"]])
        onsite = {
            site: single_site_operator(site, gapped_projector_onsite(g, ground, len(ground)))
            for site in lam.sites
        }
    inter_cfg = sys_cfg["interactions"]
    if inter_cfg["preset"] == "none":
        interactions = []
    elif inter_cfg["preset"] == "xx_chain":
        interactions = xx_chain_interactions(lam, inter_cfg["strength"])
    else:
        rng = derive_rng(seed, "interactions")
        interactions = random_ball_interactions(lam, sys_cfg["range"], inter_cfg["strength"], rng)
    return build_system(lam, onsite, interactions, sys_cfg["range"], g)


def _build_defected(cfg: Mapping, system: SpinSystem, seed: int) -> LocallyWeakSystem:
    defect_cfg = cfg["defect"]
    lam = system.lam
    region = _region_to_siteset(defect_cfg["region"], nu=lam.nu).intersection(lam)
    if len(region) == 0:
        raise ValidationError("config defect.region: protected region is empty")
    support = SiteSet.from_sites([tuple(s) for s in defect_cfg["support"]], nu=lam.nu)
    dims_by_site = system.site_dims()
    if "matrix" in defect_cfg:
        site_dims = tuple(dims_by_site[s] for s in support.sites)
        q = LocalOperator(support, _matrix_to_array(defect_cfg["matrix"]), site_dims)
    elif defect_cfg["preset"] == "kernel_pair":
        q = kernel_pair_defect(
            system, support, defect_cfg["scale"], defect_cfg["split"], derive_rng(seed, "defect")
        )
    else:
        from .operators import random_local_operator

        site_dims = tuple(dims_by_site[s] for s in support.sites)
        q = random_local_operator(
            support, derive_rng(seed, "defect"), site_dims, hermitian=True, norm=defect_cfg["scale"]
        )
    return build_locally_weak_system(system, region, q)


def _build_observables(cfg: Mapping, lam: SiteSet, dims_by_site: Mapping) -> tuple[LocalOperator, ...]:
    obs_cfg = cfg["observables"]
    if isinstance(obs_cfg, Mapping):
        axis = obs_cfg["preset"].split("_")[1]
        sites = [tuple(s) for s in obs_cfg["sites"]]
        for s in sites:
            if s not in lam:
                raise ValidationError(f"config observables.sites: site {s} not in the lattice")
        return pauli_site_observables(lam, sites, axis=axis)
    return tuple(_build_operator(block, lam, dims_by_site) for block in obs_cfg)


def scenario_from_config(cfg: Mapping) -> LpplScenario:
    """Build the runnable scenario described by a resolved config cell."""
    seed = cfg["seed"]
    system = build_spin_system(cfg, seed)
    dims_by_site = system.site_dims()
    lam = system.lam

    perturbation = None
    if cfg["perturbation"] is not None:
        perturbation = Perturbation(_build_operator(cfg["perturbation"], lam, dims_by_site))

    runnable_system: SpinSystem | LocallyWeakSystem = system
    if cfg["defect"] is not None:
        runnable_system = _build_defected(cfg, system, seed)

    observables = _build_observables(cfg, lam, dims_by_site)
    geometry = cfg["geometry"]
    scenario = LpplScenario(
        scenario_id=cfg["name"],
        system=runnable_system,
        perturbation=perturbation,
        observables=observables,
        geometry=geometry,
        solver=SolverSettings(
            k=cfg["solver"]["k"],
            tol=cfg["solver"]["tol"],
            max_basis=cfg["solver"]["max_basis"],
            max_restarts=cfg["solver"]["max_restarts"],
            degeneracy_tol=cfg["solver"]["degeneracy_tol"],
        ),
        seed=seed,
    )
    # geometry/observable containment checks happen here so that config errors
    # surface with paths at validation time
    if geometry == "local_gap":
        region = scenario.system.region  # type: ignore[union-attr]
        for idx, a in enumerate(observables):
            if not a.support.is_subset(region):
                sites = [list(s) for s in a.support.sites]
                raise ValidationError(
                    f"config observables[{idx}]: support {sites} not contained in the protected region"
                )
    return scenario
