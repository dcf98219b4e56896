"""Implicit-Euler solver and estimate audits for degenerate drift-diffusion problems."""

from .errors import DriftBVError
from .graphs import MonotoneGraph, RegularizedGraph, h_sigma, h_sigma_plus, primitive_B, primitive_j, resolvent, yosida_eval
from .geometry import build_cutoff, build_eta, build_grid, check_cutoff_sign, distance_to_boundary, eta_eval
from .fields import DriftField, ScalarField, check_assumptions, divergence_ops, extend_field, inflow_set, time_average
from .stationary import StationaryProblem, assemble, solve_stationary, solve_transport_step, verify_stationary_estimates
from .evolution import EvolutionConfig, delta_refinement_study, euler_step, interpolant_eval, mq_bound, mq_eps_bound, run
from .analysis import (
    characteristics_oracle,
    directional_tv,
    flow_map,
    lq_norm,
    report,
    total_variation,
    verify_bv_evolution,
    verify_bv_stationary,
)

__all__ = [
    "DriftBVError",
    "DriftField",
    "EvolutionConfig",
    "MonotoneGraph",
    "RegularizedGraph",
    "ScalarField",
    "StationaryProblem",
    "assemble",
    "build_cutoff",
    "build_eta",
    "build_grid",
    "characteristics_oracle",
    "check_assumptions",
    "check_cutoff_sign",
    "delta_refinement_study",
    "directional_tv",
    "distance_to_boundary",
    "divergence_ops",
    "eta_eval",
    "euler_step",
    "extend_field",
    "flow_map",
    "h_sigma",
    "h_sigma_plus",
    "inflow_set",
    "interpolant_eval",
    "lq_norm",
    "mq_bound",
    "mq_eps_bound",
    "primitive_B",
    "primitive_j",
    "report",
    "resolvent",
    "run",
    "solve_stationary",
    "solve_transport_step",
    "time_average",
    "total_variation",
    "verify_bv_evolution",
    "verify_bv_stationary",
    "verify_stationary_estimates",
    "yosida_eval",
]

__version__ = "0.1.0"
