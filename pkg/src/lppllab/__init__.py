"""Numerical laboratory for ground states of weakly interacting quantum spin
systems on finite pieces of Z^nu.

The package builds gapped on-site Hamiltonians plus short-range interactions,
computes exact ground states (matrix-free Lanczos with a dense oracle), and
measures how far a local perturbation is felt: reduced density matrices,
trace-norm discrepancies, and exponential-decay fits of discrepancy versus
lattice distance.
"""

__version__ = "0.1.0"

from .errors import LpplError, SolverError, ValidationError
from .lattice import SiteSet, ball, bulk, l1_distance, set_distance
from .operators import EmbeddedOperator, LocalOperator, StateVector, embed, operator_norm
from .system import InteractionTerm, LocallyWeakSystem, OnSiteTerm, Perturbation, SpinSystem, assemble, build_system, restrict
from .eigen import SpectralResult, ground_space, lowest_eigenpairs, spectral_gap
from .states import DensityState, observable_discrepancy, partial_trace, trace_distance_on

__all__ = [
    "LpplError",
    "ValidationError",
    "SolverError",
    "SiteSet",
    "l1_distance",
    "set_distance",
    "ball",
    "bulk",
    "LocalOperator",
    "StateVector",
    "EmbeddedOperator",
    "embed",
    "operator_norm",
    "OnSiteTerm",
    "InteractionTerm",
    "SpinSystem",
    "Perturbation",
    "LocallyWeakSystem",
    "build_system",
    "assemble",
    "restrict",
    "SpectralResult",
    "lowest_eigenpairs",
    "ground_space",
    "spectral_gap",
    "DensityState",
    "partial_trace",
    "observable_discrepancy",
    "trace_distance_on",
]
