import numpy as np
import pytest

from carbon_mfg.scenario import (
    MajorParams, PopulationParams, Scenario, SolverOptions, TimeGrid, desk_scenario,
    three_region_scenario,
)


def make_scenario(G, *, eta=1.0, sigma=0.1, kappa=0.1, delta=0.5, x0=None, x0_var=1.0,
                  horizon=1.0, n_steps=100, kappa_c=1.005, kappa_g=1.0, **options):
    G = np.asarray(G, dtype=float)
    M = G.shape[0]
    x0 = [25.0 - 5.0 * i for i in range(M)] if x0 is None else x0

    def per(v, i):
        return float(v[i]) if np.ndim(v) else float(v)

    pops = tuple(PopulationParams(eta=per(eta, i), sigma=per(sigma, i), kappa=per(kappa, i),
                                  delta=per(delta, i), x0_mean=float(x0[i]),
                                  x0_var=per(x0_var, i))
                 for i in range(M))
    return Scenario(pops, G, MajorParams(kappa_c, kappa_g), TimeGrid(horizon, n_steps),
                    SolverOptions(**options))


@pytest.fixture
def desk():
    return desk_scenario()


@pytest.fixture
def decoupled():
    return make_scenario(np.zeros((2, 2)), sigma=0.0, x0_var=0.0)


@pytest.fixture
def three_region():
    return three_region_scenario("partial", tau_sign="revenue")
