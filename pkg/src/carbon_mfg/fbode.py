"""Minor-player equilibrium for a fixed tax profile.

Given taxes ``gamma``, the representative producer of population ``i`` plays
the affine feedback ``-(eta/2 gamma) (A + B (g_i X - G[i] Xbar))`` where
``g_i`` is the connection row sum.  ``B`` solves a decoupled Riccati
equation with a closed form; ``(A, Xbar)`` solve a coupled forward-backward
linear ODE system handled here by damped Picard sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .scenario import PopulationParams, Scenario, TimeGrid

log = logging.getLogger(__name__)


class InnerConvergenceError(RuntimeError):
    """The Picard iteration for (A, Xbar) did not reach ``eps_inner``."""

    def __init__(self, message, iterations, residual, certificate=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.certificate = certificate


@dataclass(frozen=True, eq=False)
class MinorSolution:
    A: np.ndarray
    B: np.ndarray
    Xbar: np.ndarray
    grid: TimeGrid
    gamma_used: np.ndarray
    iterations: int = 0
    final_change: float = 0.0
    change_history: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))


@dataclass(frozen=True)
class ContractionCertificate:
    c1: float
    c2: float
    norm_B_sup: float
    norm_Xi: float
    is_contraction: bool


def xi_diag(scenario: Scenario, gamma) -> np.ndarray:
    """Diagonal of eta_i**2 / (2 gamma_i)."""
    gamma = np.asarray(gamma, dtype=float)
    return scenario.column("eta") ** 2 / (2.0 * gamma)


def _check_gamma(gamma_i: float) -> None:
    if not gamma_i > 0:
        raise ValueError(f"tax level must be > 0, got {gamma_i}")


def riccati_b_closed_form(pop: PopulationParams, row_sum: float, gamma_i: float,
                          grid: TimeGrid) -> np.ndarray:
    _check_gamma(gamma_i)
    ttm = grid.horizon - grid.times
    ttm[-1] = 0.0
    return 2 * pop.kappa * gamma_i / (gamma_i + pop.kappa * pop.eta**2 * row_sum * ttm)


def riccati_b_numeric(pop: PopulationParams, row_sum: float, gamma_i: float,
                      grid: TimeGrid) -> np.ndarray:
    """Backward explicit Euler for the B equation; cross-check for the closed form."""
    _check_gamma(gamma_i)
    c = pop.eta**2 * row_sum / (2.0 * gamma_i)
    return _kernels.backward_riccati(float(c), 2.0 * pop.kappa, grid.n_steps, grid.dt)


def b_paths(scenario: Scenario, gamma, numeric: bool = False) -> np.ndarray:
    solve = riccati_b_numeric if numeric else riccati_b_closed_form
    rs = scenario.row_sums
    return np.stack([
        solve(pop, rs[i], float(gamma[i]), scenario.grid)
        for i, pop in enumerate(scenario.populations)
    ])


def solve_a_xbar(scenario: Scenario, gamma, B: np.ndarray, *,
                 raise_on_failure: bool = True) -> MinorSolution:
    """Damped Picard iteration for the coupled (A, Xbar) system.

    Each sweep integrates Xbar forward from the current A, then A backward
    from that Xbar, then relaxes both with ``damping_inner``.  On exit Xbar
    is recomputed once from the final A so that the pair satisfies the
    forward recursion exactly.
    """
    opts = scenario.options
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < opts.gamma_floor):
        raise ValueError("tax levels must be >= gamma_floor")
    G = np.ascontiguousarray(scenario.connection)
    rs = scenario.row_sums
    xi = xi_diag(scenario, gamma)
    x0 = scenario.column("x0_mean")
    a_T = -scenario.column("delta")
    dt = scenario.grid.dt
    N1 = scenario.grid.n_steps + 1
    lam = opts.damping_inner
    B = np.ascontiguousarray(B, dtype=float)

    A = np.repeat(a_T[:, None], N1, axis=1)
    X = np.repeat(x0[:, None], N1, axis=1)
    history = []
    change = np.inf
    it = 0
    while it < opts.max_iter_inner:
        it += 1
        X_sweep = _kernels.forward_xbar(A, B, G, xi, rs, x0, dt)
        A_sweep = _kernels.backward_a(X_sweep, B, G, xi, rs, a_T, dt)
        if lam == 1.0:
            A_new, X_new = A_sweep, X_sweep
        else:
            A_new = (1 - lam) * A + lam * A_sweep
            X_new = (1 - lam) * X + lam * X_sweep
            A_new[:, -1] = a_T
            X_new[:, 0] = x0
        dA = float(np.max(np.abs(A_new - A)))
        dX = float(np.max(np.abs(X_new - X)))
        history.append((dA, dX))
        A, X = A_new, X_new
        change = max(dA, dX)
        if not np.isfinite(change):
            break
        if change <= opts.eps_inner:
            break

    X = _kernels.forward_xbar(A, B, G, xi, rs, x0, dt)
    if not change <= opts.eps_inner:
        msg = (f"inner Picard iteration did not converge after {it} sweeps "
               f"(last change {change:.3e}, tolerance {opts.eps_inner:.1e})")
        if raise_on_failure:
            raise InnerConvergenceError(msg, it, change)
        log.warning(msg)
    return MinorSolution(A=A, B=B, Xbar=X, grid=scenario.grid, gamma_used=gamma.copy(),
                         iterations=it, final_change=change,
                         change_history=np.array(history).reshape(-1, 2))


def solve_minor(scenario: Scenario, gamma, **kwargs) -> MinorSolution:
    """Closed-form B followed by the Picard solve for (A, Xbar)."""
    return solve_a_xbar(scenario, gamma, b_paths(scenario, gamma), **kwargs)


@dataclass(frozen=True)
class FbodeResiduals:
    a: np.ndarray     # per population, backward A equation
    b: np.ndarray     # per population, Riccati equation
    xbar: np.ndarray  # per population, forward mean equation
    a_nodes: np.ndarray = field(repr=False, default=None)

    def max(self) -> float:
        return float(max(self.a.max(), self.b.max(), self.xbar.max()))


def fbode_residual(scenario: Scenario, gamma, sol: MinorSolution) -> FbodeResiduals:
    """Sup-norm discrete residuals of the three equations on the grid.

    Backward equations are differenced against their right-hand side at the
    later node, the forward equation at the earlier node, matching the
    explicit schemes used to produce them.
    """
    shape = (scenario.M, scenario.grid.n_steps + 1)
    for name in ("A", "B", "Xbar"):
        if getattr(sol, name).shape != shape:
            raise ValueError(f"{name} has shape {getattr(sol, name).shape}, expected {shape}")
    gamma = np.asarray(gamma, dtype=float)
    G = scenario.connection
    rs = scenario.row_sums
    xi = xi_diag(scenario, gamma)
    dt = scenario.grid.dt
    A, B, X = sol.A, sol.B, sol.Xbar

    coup = rs[:, None] * X - G @ X
    ybar = xi[:, None] * (A + B * coup)
    rhs_a = B * (rs[:, None] * xi[:, None] * A - G @ ybar)
    rhs_b = xi[:, None] * rs[:, None] * B**2
    rhs_x = -ybar

    fd_a = np.diff(A, axis=1) / dt
    fd_b = np.diff(B, axis=1) / dt
    fd_x = np.diff(X, axis=1) / dt
    res_a = np.abs(fd_a - rhs_a[:, 1:])
    res_b = np.abs(fd_b - rhs_b[:, 1:])
    res_x = np.abs(fd_x - rhs_x[:, :-1])
    return FbodeResiduals(a=res_a.max(axis=1), b=res_b.max(axis=1), xbar=res_x.max(axis=1),
                          a_nodes=res_a)


# -- contraction certificate --------------------------------------------------

def spectral_norm(mat, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``mat.T @ mat``."""
    mat = np.asarray(mat, dtype=float)
    S = mat.T @ mat
    if not np.any(S):
        return 0.0
    x = np.random.default_rng(0).standard_normal(S.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = S @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def certificate_constants(T: float, norm_xi: float, norm_b: float, norm_lap: float,
                          norm_lap_xi: float, norm_g_xi: float) -> tuple[float, float]:
    """C1 and C2 of the uniqueness argument for horizon ``T``."""
    c1 = np.exp(T * (2 * norm_xi * norm_b * norm_lap + norm_xi)) * norm_xi
    a = norm_b * norm_lap_xi
    b = norm_b**2 * norm_g_xi * norm_lap
    c2 = T * np.exp(T * (a + b)) * (a + T * b * c1)
    return float(c1), float(c2)


def _certificate_norms(scenario: Scenario, gamma) -> dict[str, float]:
    gamma = np.asarray(gamma, dtype=float)
    for g in gamma:
        _check_gamma(g)
    G = scenario.connection
    Xi = np.diag(xi_diag(scenario, gamma))
    lap = np.diag(scenario.row_sums) - G
    B = b_paths(scenario, gamma)
    return dict(
        norm_xi=spectral_norm(Xi),
        norm_b=float(B.max()),
        norm_lap=spectral_norm(lap),
        norm_lap_xi=spectral_norm(lap @ Xi),
        norm_g_xi=spectral_norm(G @ Xi),
    )


def contraction_certificate(scenario: Scenario, gamma, horizon: float | None = None
                            ) -> ContractionCertificate:
    norms = _certificate_norms(scenario, gamma)
    T = scenario.grid.horizon if horizon is None else horizon
    c1, c2 = certificate_constants(T, **norms)
    return ContractionCertificate(c1=c1, c2=c2, norm_B_sup=norms["norm_b"],
                                  norm_Xi=norms["norm_xi"], is_contraction=bool(c2 < 1))


def largest_contracting_horizon(scenario: Scenario, gamma, n_grid: int = 200) -> float:
    """Largest T' on a uniform grid in (0, T] with C2(T') < 1, or 0.0 if none."""
    norms = _certificate_norms(scenario, gamma)
    best = 0.0
    for T in scenario.grid.horizon * np.arange(1, n_grid + 1) / n_grid:
        if certificate_constants(float(T), **norms)[1] < 1:
            best = float(T)
    return best
