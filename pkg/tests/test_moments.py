import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carbon_mfg.fbode import solve_minor
from carbon_mfg.moments import (
    compute_moments, compute_tau, cost_gradient_mean, mean_control, state_variance,
)
from carbon_mfg.scenario import MajorParams, TimeGrid, desk_scenario

from conftest import make_scenario

# independent Monte Carlo of the feedback SDE (1e5 paths, dt = 1e-3) for the
# desk scenario at gamma = (1, 1): (estimate, standard error)
MC_VAR_T = [(0.7006349308347326, 0.0031317758176153533),
            (0.702913668533815, 0.003134862447447782)]
MC_INT_ALPHA2 = [(0.05595202420668681, 0.00021576104164419753),
                 (0.4712097211894658, 0.0007141659122644368)]


def test_decoupled_control_and_variance():
    sc = make_scenario(np.zeros((2, 2)), sigma=0.3, x0_var=0.5)
    sol = solve_minor(sc, [1.0, 1.0])
    m = compute_moments(sc, [1.0, 1.0], sol)
    t = sc.grid.times
    assert np.allclose(m.alphabar, 0.25, atol=1e-14)
    assert np.allclose(m.V, 0.5 + 0.09 * t, atol=1e-12)


def test_zero_kappa_limit():
    # B vanishes as kappa -> 0 so the mean control tends to eta*delta/(2 gamma)
    sc = make_scenario(np.ones((2, 2)), kappa=1e-12, delta=[0.5, 2.0])
    sol = solve_minor(sc, [1.0, 4.0])
    a = mean_control(sol, sc.connection, [1.0, 4.0], sc.column("eta"))
    assert np.allclose(a[0], 0.25, atol=1e-9)
    assert np.allclose(a[1], 0.25, atol=1e-9)


def test_deterministic_flow_has_zero_variance():
    sc = make_scenario(np.ones((2, 2)), sigma=0.0, x0_var=0.0)
    sol = solve_minor(sc, [1.0, 2.0])
    m = compute_moments(sc, [1.0, 2.0], sol)
    assert np.all(m.V == 0.0)
    assert np.allclose(m.e_alpha2, m.alphabar**2, rtol=1e-14, atol=0)


def test_decoupled_deterministic_integral():
    sc = make_scenario(np.zeros((2, 2)), sigma=0.0, x0_var=0.0)
    sol = solve_minor(sc, [1.0, 1.0])
    m = compute_moments(sc, [1.0, 1.0], sol)
    assert np.allclose(m.e_alpha2_integral, 0.0625, atol=1e-14)


def test_variance_and_integral_against_monte_carlo():
    sc = desk_scenario()
    sol = solve_minor(sc, [1.0, 1.0])
    m = compute_moments(sc, [1.0, 1.0], sol)
    for i in range(2):
        est, se = MC_VAR_T[i]
        assert abs(m.V[i, -1] - est) <= 3 * se
        est, se = MC_INT_ALPHA2[i]
        assert abs(m.e_alpha2_integral[i] - est) <= 3 * se


def test_integral_first_order_in_dt():
    vals = []
    for n in (200, 400, 800, 1600):
        sc = desk_scenario().with_grid(TimeGrid(1.0, n))
        sol = solve_minor(sc, [1.0, 2.0])
        vals.append(compute_moments(sc, [1.0, 2.0], sol).e_alpha2_integral)
    d = np.abs(np.diff(np.array(vals), axis=0))
    assert np.all(d[0] / d[1] == pytest.approx(2.0, rel=0.1))
    assert np.all(d[1] / d[2] == pytest.approx(2.0, rel=0.1))


def test_optimality_identity(desk):
    gamma = np.array([1.0, 2.0])
    sol = solve_minor(desk, gamma)
    a = mean_control(sol, desk.connection, gamma, desk.column("eta"))
    y = cost_gradient_mean(sol, desk.connection)
    eta = desk.column("eta")
    assert np.max(np.abs(2 * gamma[:, None] * a + eta[:, None] * y)) <= 1e-12


def test_second_moment_dominates_square_mean(desk):
    sol = solve_minor(desk, [1.0, 2.0])
    m = compute_moments(desk, [1.0, 2.0], sol)
    assert np.all(m.e_alpha2 >= m.alphabar**2)
    assert np.all(m.e_alpha2 > m.alphabar**2)


def test_tau_conventions():
    major = MajorParams(kappa_c=1.001, kappa_g=1.0)
    assert np.allclose(compute_tau(major, [10, 20, 5], "paper"), [0.01, 0.02, 0.005])
    assert np.allclose(compute_tau(major, [10, 20, 5], "revenue"), [-0.01, -0.02, -0.005])
    assert np.all(compute_tau(MajorParams(1.0, 1.0), [3.0, 4.0]) == 0.0)
    with pytest.raises(ValueError):
        compute_tau(major, [1.0, np.nan])
    with pytest.raises(ValueError):
        compute_tau(major, [1.0], "sideways")


def test_variance_clipped_on_overshoot(caplog):
    sc = make_scenario(np.ones((2, 2)), kappa=5.0, sigma=0.0, x0_var=1.0, n_steps=2,
                       eta=3.0, gamma_floor=1e-3)
    B = np.full((2, 3), 10.0)
    V = state_variance(sc, [0.01, 0.01], B)
    assert np.all(V >= 0)
    assert "clipped" in caplog.text


@settings(max_examples=25, deadline=None)
@given(g1=st.floats(0.1, 5), g2=st.floats(0.1, 5), w=st.floats(0, 1), sigma=st.floats(0, 1))
def test_moment_invariants(g1, g2, w, sigma):
    G = np.array([[1.0, w], [w, 1.0]])
    sc = make_scenario(G, sigma=sigma, n_steps=50)
    sol = solve_minor(sc, [g1, g2])
    m = compute_moments(sc, [g1, g2], sol)
    assert np.all(m.V >= 0)
    assert np.all(m.e_alpha2 >= m.alphabar**2 * (1 - 1e-12))
