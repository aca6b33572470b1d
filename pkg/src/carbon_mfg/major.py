"""Regulators' best responses and their simultaneous equilibrium.

Only the tax-dependent part of a regulator's cost matters for its choice:

    tau_i * gamma_i + sum_j G_ij (gamma_i - gamma_j)**2 + kappa_g * gamma_i**2

which is strictly convex for ``kappa_g > 0``.  Setting every derivative to
zero at once gives a linear system ``2 K gamma = -tau`` with
``K = diag(G 1 + kappa_g) - G``.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

PIVOT_RTOL = 1e-12
FIXED_POINT_TOL = 1e-10


class SingularMajorSystemError(np.linalg.LinAlgError):
    pass


class EquilibriumCheckError(RuntimeError):
    pass


def _others(i: int, gamma_others, M: int) -> np.ndarray:
    gamma_others = np.asarray(gamma_others, dtype=float)
    if gamma_others.shape != (M - 1,):
        raise ValueError(f"expected {M - 1} other tax levels, got shape {gamma_others.shape}")
    return np.insert(gamma_others, i, 0.0)


def best_response(i: int, gamma_others, tau_i: float, G, kappa_g: float) -> float:
    """Minimizer of regulator ``i``'s reduced cost given the other taxes.

    ``gamma_others`` lists the M-1 other levels in population order with
    entry ``i`` removed.
    """
    if not kappa_g > 0:
        raise ValueError("kappa_g must be > 0")
    G = np.asarray(G, dtype=float)
    g = _others(i, gamma_others, G.shape[0])
    num = tau_i - 2.0 * (G[i] @ g)
    den = -2.0 * kappa_g - 2.0 * G[i].sum() + 2.0 * G[i, i]
    return float(num / den)


def major_cost_terms(i: int, gamma_i: float, gamma_others, tau_i: float, G,
                     kappa_g: float) -> float:
    G = np.asarray(G, dtype=float)
    g = _others(i, gamma_others, G.shape[0])
    mask = np.arange(G.shape[0]) != i
    spread = G[i, mask] @ (gamma_i - g[mask]) ** 2
    return float(tau_i * gamma_i + spread + kappa_g * gamma_i**2)


def major_matrix(G, kappa_g: float) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    return np.diag(G.sum(axis=1) + kappa_g) - G


def equilibrium_given_minors(tau, G, kappa_g: float) -> np.ndarray:
    """Simultaneous best responses by a partially pivoted dense solve.

    The result is re-checked against :func:`best_response` coordinate by
    coordinate.
    """
    tau = np.asarray(tau, dtype=float)
    G = np.asarray(G, dtype=float)
    K = major_matrix(G, kappa_g)
    with warnings.catch_warnings():
        # singularity is reported below with a clearer error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(K, check_finite=True)
    scale = np.linalg.norm(K, 2)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * max(scale, np.finfo(float).tiny):
        raise SingularMajorSystemError("major-player system matrix is singular")
    gamma = scipy.linalg.lu_solve((lu, piv), -0.5 * tau)

    if kappa_g > 0:
        M = len(tau)
        for i in range(M):
            br = best_response(i, np.delete(gamma, i), tau[i], G, kappa_g)
            if abs(br - gamma[i]) > FIXED_POINT_TOL * max(1.0, abs(gamma[i])):
                raise EquilibriumCheckError(
                    f"solved profile is not a best response for population {i + 1} "
                    f"(|{br} - {gamma[i]}|)")
    return gamma
