"""Equilibrium carbon taxes in a game between regulators and networked producer populations."""

from .fbode import (
    ContractionCertificate,
    InnerConvergenceError,
    MinorSolution,
    contraction_certificate,
    fbode_residual,
    largest_contracting_horizon,
    solve_minor,
)
from .major import best_response, equilibrium_given_minors
from .moments import MomentPaths, compute_moments, compute_tau
from .montecarlo import McReport, consistency_checks, deviation_test, simulate_moments, validate
from .nash import EquilibriumResult, fixed_point_defect, solve_m4fne, solve_mfg_given_gamma
from .scenario import (
    MajorParams,
    PopulationParams,
    Scenario,
    ScenarioError,
    SolverOptions,
    TimeGrid,
    desk_scenario,
    load_scenario,
    read_scenario,
    three_region_scenario,
)

__version__ = "0.1.0"
