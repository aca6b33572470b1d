"""Monte Carlo checks of the analytic producer equilibrium.

Representative producers are simulated by Euler-Maruyama under the solved
feedback law with the population means frozen at their analytic paths, i.e.
in the mean-field limit.  Each path owns a Philox stream keyed by
``(seed, path index)`` so any subset of paths can be regenerated exactly and
paired cost comparisons share their noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .fbode import MinorSolution
from .moments import MomentPaths, compute_moments
from .scenario import Scenario

CHUNK = 2048
N_SE = 3.0


@dataclass(frozen=True)
class Perturbation:
    """A modification of the equilibrium feedback law.

    kind is one of ``none``, ``shift`` (add ``amount``), ``scale`` (multiply
    by ``1 + amount``), ``bump`` (add ``amount`` on ``window``), ``negate``
    or ``zero``.
    """

    kind: str = "none"
    amount: float = 0.0
    window: tuple[float, float] | None = None

    def apply(self, t: float, alpha: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "none":
            return alpha
        if k == "shift":
            return alpha + self.amount
        if k == "scale":
            return alpha * (1.0 + self.amount)
        if k == "bump":
            lo, hi = self.window
            return alpha + self.amount if lo <= t < hi else alpha
        if k == "negate":
            return -alpha
        if k == "zero":
            return np.zeros_like(alpha)
        raise ValueError(f"unknown perturbation kind {k!r}")

    def describe(self) -> str:
        if self.kind == "bump":
            return f"bump {self.amount:+g} on [{self.window[0]:g}, {self.window[1]:g})"
        if self.kind in ("shift", "scale"):
            return f"{self.kind} {self.amount:+g}"
        return self.kind


def structured_perturbations(horizon: float) -> list[Perturbation]:
    """The 20 perturbations used by the deviation test."""
    out = [Perturbation("shift", s * a) for a in (0.01, 0.1) for s in (1, -1)]
    out += [Perturbation("scale", s * a) for a in (0.01, 0.1) for s in (1, -1)]
    thirds = [(k * horizon / 3, (k + 1) * horizon / 3) for k in range(3)]
    thirds[-1] = (thirds[-1][0], np.inf)
    out += [Perturbation("bump", s * a, w) for w in thirds for a in (0.01, 0.1) for s in (1, -1)]
    return out


def random_perturbations(horizon: float, n: int, seed: int) -> list[Perturbation]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        kind = rng.choice(["shift", "scale", "bump"])
        amount = float(rng.choice([-1, 1]) * rng.uniform(0.005, 0.2))
        window = None
        if kind == "bump":
            lo, hi = np.sort(rng.uniform(0, horizon, size=2))
            window = (float(lo), float(hi))
        out.append(Perturbation(str(kind), amount, window))
    return out


@dataclass(frozen=True)
class DeviationOutcome:
    population: int
    perturbation: str
    cost_equilibrium: float
    cost_deviated: float
    standard_error: float
    passed: bool


@dataclass(frozen=True, eq=False)
class McReport:
    n_paths: int
    seed: int
    empirical_mean: np.ndarray
    empirical_var: np.ndarray
    empirical_e_alpha2_integral: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    se_e_alpha2_integral: np.ndarray
    deviation_tests: list[DeviationOutcome] = field(default_factory=list)


# -- noise -------------------------------------------------------------------

def path_normals(seed: int, start: int, stop: int, M: int, n_steps: int) -> np.ndarray:
    """Standard normals of shape (stop - start, M, n_steps + 1).

    Column 0 drives the initial state, columns 1.. the Brownian increments.
    """
    out = np.empty((stop - start, M, n_steps + 1))
    for k, p in enumerate(range(start, stop)):
        bitgen = np.random.Philox(key=np.array([p, seed], dtype=np.uint64))
        out[k] = np.random.Generator(bitgen).standard_normal((M, n_steps + 1))
    return out


def _chunks(n_paths: int) -> Iterator[tuple[int, int]]:
    for start in range(0, n_paths, CHUNK):
        yield start, min(start + CHUNK, n_paths)


# -- simulation --------------------------------------------------------------

class _Feedback:
    """Equilibrium feedback of one population with the mean field frozen."""

    def __init__(self, scenario: Scenario, gamma, sol: MinorSolution, i: int):
        pop = scenario.populations[i]
        G = scenario.connection
        self.gain = -pop.eta / (2.0 * gamma[i])
        self.A = sol.A[i]
        self.Bg = sol.B[i] * G[i].sum()
        self.offset = sol.B[i] * (G[i] @ sol.Xbar)

    def __call__(self, n: int, x: np.ndarray) -> np.ndarray:
        return self.gain * (self.A[n] + self.Bg[n] * x - self.offset[n])


def simulate_population(scenario: Scenario, gamma, sol: MinorSolution, i: int,
                        normals: np.ndarray, perturbation: Perturbation | None = None,
                        flip_sign: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Paths of state and control for population ``i``; arrays (paths, n_T + 1).

    ``normals`` has shape (paths, n_T + 1).  ``flip_sign`` replaces the
    equilibrium feedback by its negative before any perturbation.
    """
    pop = scenario.populations[i]
    grid = scenario.grid
    dt, N = grid.dt, grid.n_steps
    times = grid.times
    feedback = _Feedback(scenario, gamma, sol, i)
    P = normals.shape[0]
    X = np.empty((P, N + 1))
    alpha = np.empty((P, N + 1))
    X[:, 0] = pop.x0_mean + np.sqrt(pop.x0_var) * normals[:, 0]
    noise_scale = pop.sigma * np.sqrt(dt)
    for n in range(N + 1):
        a = feedback(n, X[:, n])
        if flip_sign:
            a = -a
        if perturbation is not None:
            a = perturbation.apply(times[n], a)
        alpha[:, n] = a
        if n < N:
            X[:, n + 1] = X[:, n] + pop.eta * a * dt + noise_scale * normals[:, n + 1]
    return X, alpha


def _trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    return dt * (values[..., 1:-1].sum(axis=-1) + 0.5 * (values[..., 0] + values[..., -1]))


def path_costs(scenario: Scenario, gamma, sol: MinorSolution, moments: MomentPaths, i: int,
               X: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Realized minor cost of each simulated path of population ``i``."""
    if X.shape != alpha.shape or X.shape[1] != scenario.grid.n_steps + 1:
        raise ValueError("state and control paths must share the grid shape")
    pop = scenario.populations[i]
    G = scenario.connection
    dt = scenario.grid.dt
    crowd = G[i] @ moments.alphabar**2
    # the simulated control is held constant on each step, so its cost
    # integrates exactly as a left-point sum; the last node never acts
    running = gamma[i] * dt * (alpha[:, :-1] ** 2).sum(axis=1) + _trapezoid(crowd, dt)
    XT = X[:, -1]
    terminal = pop.kappa * ((XT[:, None] - sol.Xbar[None, :, -1]) ** 2 @ G[i]) - pop.delta * XT
    return running + terminal


def minor_cost_estimate(scenario: Scenario, gamma, sol: MinorSolution, i: int,
                        n_paths: int, seed: int, perturbation: Perturbation | None = None,
                        moments: MomentPaths | None = None) -> tuple[float, float]:
    """Mean minor cost of population ``i`` under an optional perturbation, and its SE."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    gamma = np.asarray(gamma, dtype=float)
    moments = moments or compute_moments(scenario, gamma, sol)
    costs = np.concatenate([
        path_costs(scenario, gamma, sol, moments, i,
                   *simulate_population(scenario, gamma, sol, i,
                                        path_normals(seed, a, b, scenario.M,
                                                     scenario.grid.n_steps)[:, i],
                                        perturbation))
        for a, b in _chunks(n_paths)
    ])
    return float(costs.mean()), float(costs.std(ddof=1) / np.sqrt(n_paths))


def simulate_moments(scenario: Scenario, gamma, sol: MinorSolution, n_paths: int,
                     seed: int) -> McReport:
    """Empirical means, variances and control second moments with standard errors."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    gamma = np.asarray(gamma, dtype=float)
    M, N = scenario.M, scenario.grid.n_steps
    dt = scenario.grid.dt
    # raw moments of the deviation from the analytic mean, for precision
    S = np.zeros((4, M, N + 1))
    int_alpha2 = np.empty((M, n_paths))
    for a, b in _chunks(n_paths):
        normals = path_normals(seed, a, b, M, N)
        for i in range(M):
            X, alpha = simulate_population(scenario, gamma, sol, i, normals[:, i])
            d = X - sol.Xbar[i]
            S[0, i] += d.sum(axis=0)
            S[1, i] += (d**2).sum(axis=0)
            S[2, i] += (d**3).sum(axis=0)
            S[3, i] += (d**4).sum(axis=0)
            int_alpha2[i, a:b] = _trapezoid(alpha**2, dt)

    n = float(n_paths)
    m1, m2, m3, m4 = S / n
    var = (m2 - m1**2) * n / (n - 1)
    central4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
    se_var = np.sqrt(np.maximum(central4 - var**2 * (n - 3) / (n - 1), 0.0) / n)
    return McReport(
        n_paths=n_paths, seed=seed,
        empirical_mean=sol.Xbar + m1,
        empirical_var=np.maximum(var, 0.0),
        empirical_e_alpha2_integral=int_alpha2.mean(axis=1),
        se_mean=np.sqrt(np.maximum(var, 0.0) / n),
        se_var=se_var,
        se_e_alpha2_integral=int_alpha2.std(axis=1, ddof=1) / np.sqrt(n),
    )


def deviation_test(scenario: Scenario, gamma, sol: MinorSolution,
                   perturbations: Sequence[Perturbation], n_paths: int, seed: int,
                   populations: Sequence[int] | None = None,
                   flip_sign: bool = False) -> list[DeviationOutcome]:
    """Paired common-random-number comparison of each perturbation against the candidate.

    The candidate is the solved feedback, or its negative with
    ``flip_sign`` (a control that must be beaten by some perturbation).
    A perturbation passes when it does not lower the mean cost by more than
    three standard errors of the paired difference.
    """
    if not perturbations:
        raise ValueError("perturbation list is empty")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    gamma = np.asarray(gamma, dtype=float)
    moments = compute_moments(scenario, gamma, sol)
    M, N = scenario.M, scenario.grid.n_steps
    pops = range(M) if populations is None else populations
    n_pert = len(perturbations)
    base = {i: np.empty(n_paths) for i in pops}
    dev = {i: np.empty((n_pert, n_paths)) for i in pops}
    for a, b in _chunks(n_paths):
        normals = path_normals(seed, a, b, M, N)
        for i in pops:
            X, alpha = simulate_population(scenario, gamma, sol, i, normals[:, i],
                                           flip_sign=flip_sign)
            base[i][a:b] = path_costs(scenario, gamma, sol, moments, i, X, alpha)
            for k, pert in enumerate(perturbations):
                X, alpha = simulate_population(scenario, gamma, sol, i, normals[:, i],
                                               pert, flip_sign=flip_sign)
                dev[i][k, a:b] = path_costs(scenario, gamma, sol, moments, i, X, alpha)

    out = []
    for i in pops:
        for k, pert in enumerate(perturbations):
            diff = dev[i][k] - base[i]
            se = float(diff.std(ddof=1) / np.sqrt(n_paths))
            c_eq = float(base[i].mean())
            c_dev = float(dev[i][k].mean())
            out.append(DeviationOutcome(
                population=i + 1, perturbation=pert.describe(),
                cost_equilibrium=c_eq, cost_deviated=c_dev, standard_error=se,
                passed=bool(c_dev >= c_eq - N_SE * se)))
    return out


def validate(scenario: Scenario, gamma, sol: MinorSolution, n_paths: int, seed: int,
             perturbations: Sequence[Perturbation] | None = None,
             flip_sign: bool = False) -> McReport:
    """Moments plus the structured deviation test, in one report."""
    report = simulate_moments(scenario, gamma, sol, n_paths, seed)
    perts = perturbations or structured_perturbations(scenario.grid.horizon)
    tests = deviation_test(scenario, gamma, sol, perts, n_paths, seed, flip_sign=flip_sign)
    return McReport(**{**report.__dict__, "deviation_tests": tests})


def consistency_checks(report: McReport, sol: MinorSolution, moments: MomentPaths,
                       abs_floor: float = 1e-9) -> dict:
    """Compare simulated moments with the analytic paths at T/2 and T.

    A check passes when the gap is within three standard errors; the small
    absolute floor only absorbs rounding when the dynamics are deterministic.
    """
    N = sol.grid.n_steps
    nodes = sorted({N // 2, N})
    items = []

    def add(name, i, n, emp, ana, se):
        gap = abs(emp - ana)
        items.append({
            "quantity": name, "population": i + 1,
            "t": None if n is None else float(sol.grid.times[n]),
            "empirical": float(emp), "analytic": float(ana), "standard_error": float(se),
            "passed": bool(gap <= N_SE * se + abs_floor * (1.0 + abs(ana))),
        })

    M = sol.A.shape[0]
    for i in range(M):
        for n in nodes:
            add("mean", i, n, report.empirical_mean[i, n], sol.Xbar[i, n], report.se_mean[i, n])
            add("var", i, n, report.empirical_var[i, n], moments.V[i, n], report.se_var[i, n])
        add("e_alpha2_integral", i, None, report.empirical_e_alpha2_integral[i],
            moments.e_alpha2_integral[i], report.se_e_alpha2_integral[i])
    consistency_ok = all(c["passed"] for c in items)
    deviation_ok = all(d.passed for d in report.deviation_tests)
    return {"consistency": items, "consistency_passed": consistency_ok,
            "deviation_passed": deviation_ok, "passed": consistency_ok and deviation_ok}
