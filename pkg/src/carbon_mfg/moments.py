"""Moments of the equilibrium controls and the tax-revenue weights.

The feedback is affine in the producer's own state, so the state deviation
from its mean is an Ornstein-Uhlenbeck-type process and its variance obeys a
linear ODE.  The control second moment then follows in closed form from the
mean and the variance; no sampling is involved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .fbode import MinorSolution, xi_diag
from .scenario import MajorParams, Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MomentPaths:
    alphabar: np.ndarray
    V: np.ndarray
    e_alpha2: np.ndarray
    e_alpha2_integral: np.ndarray


def cost_gradient_mean(sol: MinorSolution, G) -> np.ndarray:
    """Population-mean adjoint A + B (g_i Xbar_i - G[i] Xbar)."""
    G = np.asarray(G, dtype=float)
    coup = G.sum(axis=1)[:, None] * sol.Xbar - G @ sol.Xbar
    return sol.A + sol.B * coup


def mean_control(sol: MinorSolution, G, gamma, eta) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("tax levels must be > 0")
    eta = np.asarray(eta, dtype=float)
    return -(eta / (2 * gamma))[:, None] * cost_gradient_mean(sol, G)


def state_variance(scenario: Scenario, gamma, B: np.ndarray) -> np.ndarray:
    """Explicit Euler for dV/dt = -2 xi B g V + sigma**2, clipped at zero."""
    xi = xi_diag(scenario, gamma)
    V, clipped = _kernels.forward_variance(
        np.ascontiguousarray(B, dtype=float), xi, scenario.row_sums,
        scenario.column("sigma") ** 2, scenario.column("x0_var"), scenario.grid.dt)
    if clipped:
        log.warning("state variance undershot zero at %d node(s); clipped", clipped)
    return V


def control_second_moment(sol: MinorSolution, V: np.ndarray, G, gamma, eta,
                          dt: float) -> tuple[np.ndarray, np.ndarray]:
    """E[alpha**2] on the grid and its trapezoidal time integral."""
    gamma = np.asarray(gamma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    rs = np.asarray(G, dtype=float).sum(axis=1)
    m = cost_gradient_mean(sol, G)
    scale = (eta / (2 * gamma))[:, None] ** 2
    e2 = scale * (m**2 + (sol.B * rs[:, None]) ** 2 * V)
    integral = dt * (e2[:, 1:-1].sum(axis=1) + 0.5 * (e2[:, 0] + e2[:, -1]))
    return e2, integral


def compute_moments(scenario: Scenario, gamma, sol: MinorSolution) -> MomentPaths:
    G = scenario.connection
    eta = scenario.column("eta")
    alphabar = mean_control(sol, G, gamma, eta)
    V = state_variance(scenario, gamma, sol.B)
    e2, integral = control_second_moment(sol, V, G, gamma, eta, scenario.grid.dt)
    return MomentPaths(alphabar=alphabar, V=V, e_alpha2=e2, e_alpha2_integral=integral)


def compute_tau(major: MajorParams, integrals, sign: str = "paper") -> np.ndarray:
    """Revenue weights tau_i; ``sign='revenue'`` flips the sign of the default convention."""
    integrals = np.asarray(integrals, dtype=float)
    if not np.all(np.isfinite(integrals)):
        raise ValueError("second-moment integrals must be finite")
    if sign == "paper":
        return (major.kappa_c - 1.0) * integrals
    if sign == "revenue":
        return (1.0 - major.kappa_c) * integrals
    raise ValueError(f"unknown tau sign convention {sign!r}")
