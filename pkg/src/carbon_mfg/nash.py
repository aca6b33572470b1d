"""Nested fixed point for the joint regulator/producer equilibrium.

The outer loop alternates between the producers' mean field equilibrium for
the current taxes and the regulators' simultaneous best response to the
resulting revenue weights, with relaxation and a positivity floor on taxes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fbode import InnerConvergenceError, MinorSolution, contraction_certificate, solve_minor
from .major import equilibrium_given_minors
from .moments import MomentPaths, compute_moments, compute_tau
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    gamma: np.ndarray
    minor: MinorSolution
    moments: MomentPaths
    tau: np.ndarray
    outer_iterations: int
    outer_residual: float
    converged: bool
    floored: np.ndarray
    history: np.ndarray  # rows: (gamma change, alphabar change)


def solve_mfg_given_gamma(scenario: Scenario, gamma) -> tuple[MinorSolution, MomentPaths]:
    """Producers' equilibrium for exogenous taxes."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (scenario.M,):
        raise ValueError(f"expected {scenario.M} tax levels, got shape {gamma.shape}")
    try:
        sol = solve_minor(scenario, gamma)
    except InnerConvergenceError as exc:
        if exc.certificate is None:
            exc.certificate = contraction_certificate(scenario, gamma)
        raise
    return sol, compute_moments(scenario, gamma, sol)


def solve_m4fne(scenario: Scenario, gamma0=None) -> EquilibriumResult:
    opts = scenario.options
    floor = opts.gamma_floor
    lam = opts.damping_outer
    G = scenario.connection

    gamma = np.ones(scenario.M) if gamma0 is None else np.asarray(gamma0, dtype=float)
    gamma = np.maximum(gamma, floor)
    floored = gamma <= floor
    minor, moments = solve_mfg_given_gamma(scenario, gamma)
    tau = compute_tau(scenario.major, moments.e_alpha2_integral, opts.tau_sign)

    history = []
    residual = np.inf
    converged = False
    it = 0
    while it < opts.max_iter_outer:
        it += 1
        response = equilibrium_given_minors(tau, G, scenario.major.kappa_g)
        target = (1 - lam) * gamma + lam * response
        floored = target < floor
        gamma_new = np.where(floored, floor, target)

        minor, moments_new = solve_mfg_given_gamma(scenario, gamma_new)
        d_gamma = float(np.max(np.abs(gamma_new - gamma)))
        d_alpha = float(np.max(np.abs(moments_new.alphabar - moments.alphabar)))
        history.append((d_gamma, d_alpha))
        residual = max(d_gamma, d_alpha)
        gamma, moments = gamma_new, moments_new
        tau = compute_tau(scenario.major, moments.e_alpha2_integral, opts.tau_sign)
        log.debug("outer %d: gamma=%s residual=%.3e", it, gamma, residual)
        if residual <= opts.eps_outer:
            converged = True
            break

    if not converged:
        log.warning("outer iteration stopped after %d steps with residual %.3e",
                    it, residual)
    return EquilibriumResult(
        gamma=gamma, minor=minor, moments=moments, tau=tau,
        outer_iterations=it, outer_residual=residual, converged=converged,
        floored=np.asarray(floored, dtype=bool),
        history=np.array(history).reshape(-1, 2),
    )


def fixed_point_defect(scenario: Scenario, result: EquilibriumResult) -> np.ndarray:
    """|best response to tau(gamma) - gamma| per population at the returned profile."""
    response = equilibrium_given_minors(result.tau, scenario.connection,
                                        scenario.major.kappa_g)
    return np.abs(response - result.gamma)
