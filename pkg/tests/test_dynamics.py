"""Closed-form flow vs direct ODE integration, plus its analytic sensitivities."""

import numpy as np
import pytest

from ctrlsurf.dynamics import (
    FlowContext,
    GameParams,
    dphi_da,
    dphi_dV,
    eval_K,
    eval_phi,
    eval_V,
    generalized_flow,
    linear_dynamics,
    logistic_dynamics,
)
from ctrlsurf.fourier import CoefficientGrid, eval_U, eval_u
from ctrlsurf.oracles import integrate_ode


def random_instance(rng, max_order=3):
    M = int(rng.integers(0, max_order + 1))
    N = int(rng.integers(0, max_order + 1))
    grid = CoefficientGrid(rng.uniform(-0.5, 0.5, (M + 1, N + 1)), 4.0, 1.0)
    game = GameParams(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
    x0 = float(rng.uniform(0.05, 0.95))
    return grid, game, x0


def test_flow_starts_at_x0():
    rng = np.random.default_rng(20)
    for _ in range(20):
        grid, game, x0 = random_instance(rng)
        assert eval_phi(FlowContext(grid, game, x0), 0.0) == pytest.approx(x0, abs=1e-12)


def test_uncontrolled_logistic_decay():
    # u == 0: xdot = -xi x(1-x), so x(t) = 1/(1 + ((1-x0)/x0) e^{xi t})
    grid = CoefficientGrid.zeros(2, 2, 4.0, 1.0)
    ctx = FlowContext(grid, GameParams(0.5, 0.25), 0.5)
    assert eval_phi(ctx, 4.0) == pytest.approx(1.0 / (1.0 + np.e), abs=1e-14)
    t = np.linspace(0.0, 4.0, 11)
    np.testing.assert_allclose(
        eval_phi(ctx, t), 1.0 / (1.0 + np.exp(0.25 * t)), atol=1e-14
    )


def test_zero_xi_zero_control_is_stationary():
    grid = CoefficientGrid.zeros(1, 1, 4.0, 1.0)
    ctx = FlowContext(grid, GameParams(0.7, 0.0), 0.3)
    np.testing.assert_allclose(eval_phi(ctx, np.linspace(0, 4, 9)), 0.3, atol=1e-14)


def test_balanced_control_is_stationary():
    # constant u with beta*u == xi freezes the replicator at x0
    beta, xi = 0.5, 0.25
    a = np.zeros((2, 3))
    a[0, 0] = xi / beta
    ctx = FlowContext(CoefficientGrid(a, 4.0, 1.0), GameParams(beta, xi), 0.62)
    np.testing.assert_allclose(eval_phi(ctx, np.linspace(0, 4, 9)), 0.62, atol=1e-13)


def test_eval_V_and_K():
    rng = np.random.default_rng(21)
    grid, game, x0 = random_instance(rng)
    ctx = FlowContext(grid, game, x0)
    t = 2.7
    expected_V = game.beta * eval_U(grid, t, x0) - game.xi * t
    assert eval_V(ctx, t) == pytest.approx(expected_V, abs=1e-13)
    # U(0) = 0 for the cosine basis, so K is the plain odds ratio
    assert eval_K(ctx) == pytest.approx((1 - x0) / x0, abs=1e-13)


def test_flow_matches_rk4():
    # the sign-sensitive check: closed form vs direct integration of the ODE
    rng = np.random.default_rng(22)
    lattice = np.linspace(0.0, 4.0, 81)
    for _ in range(15):
        grid, game, x0 = random_instance(rng)
        ctx = FlowContext(grid, game, x0)
        traj = integrate_ode(game, lambda t: eval_u(grid, t, x0), x0, 1e-3, 4.0)
        ode = np.interp(lattice, traj.times, traj.states)
        assert np.max(np.abs(eval_phi(ctx, lattice) - ode)) < 1e-5


def test_dphi_dV_is_phi_one_minus_phi():
    rng = np.random.default_rng(23)
    grid, game, x0 = random_instance(rng)
    ctx = FlowContext(grid, game, x0)
    t = np.linspace(0.0, 4.0, 21)
    phi = eval_phi(ctx, t)
    np.testing.assert_allclose(dphi_dV(ctx, t), phi * (1 - phi), atol=1e-14)


def test_dphi_da_matches_fd():
    rng = np.random.default_rng(24)
    h = 1e-7
    for _ in range(10):
        grid, game, x0 = random_instance(rng)
        ctx = FlowContext(grid, game, x0)
        m = int(rng.integers(0, grid.M + 1))
        n = int(rng.integers(0, grid.N + 1))
        t = float(rng.uniform(0.0, 4.0))
        a = np.array(grid.coeffs)
        a[m, n] += h
        up = FlowContext(CoefficientGrid(a, 4.0, 1.0), game, x0)
        a[m, n] -= 2 * h
        dn = FlowContext(CoefficientGrid(a, 4.0, 1.0), game, x0)
        fd = (eval_phi(up, t) - eval_phi(dn, t)) / (2 * h)
        assert dphi_da(ctx, m, n, t) == pytest.approx(fd, abs=1e-7)


def test_extreme_drive_saturates_without_warnings():
    # coefficients large enough to push V far past the exp clamp
    a = np.zeros((1, 1))
    a[0, 0] = 500.0
    ctx = FlowContext(CoefficientGrid(a, 4.0, 1.0), GameParams(5.0, 0.0), 0.5)
    with np.errstate(over="raise"):
        values = eval_phi(ctx, np.linspace(0.0, 4.0, 5))
    assert np.all(np.isfinite(values))
    assert values[-1] == pytest.approx(1.0)
    ctx_neg = FlowContext(CoefficientGrid(-a, 4.0, 1.0), GameParams(5.0, 0.0), 0.5)
    with np.errstate(over="raise"):
        low = eval_phi(ctx_neg, 4.0)
    assert low == pytest.approx(0.0, abs=1e-300)


def test_degenerate_x0_rejected():
    grid = CoefficientGrid.zeros(1, 1, 4.0, 1.0)
    game = GameParams(0.5, 0.25)
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            FlowContext(grid, game, bad)


def test_game_params_validation():
    with pytest.raises(ValueError):
        GameParams(np.inf, 0.0)
    with pytest.raises(ValueError):
        GameParams(0.5, np.nan)
    GameParams(0.5, -0.25)  # negative rates are legitimate


# -- generalized separable dynamics -----------------------------------------

def test_logistic_instance_reproduces_flow():
    rng = np.random.default_rng(25)
    t = np.linspace(0.0, 4.0, 33)
    for _ in range(10):
        grid, game, x0 = random_instance(rng)
        dyn = logistic_dynamics(game)
        np.testing.assert_allclose(
            generalized_flow(dyn, grid, x0, t),
            eval_phi(FlowContext(grid, game, x0), t),
            atol=1e-12,
        )


def test_linear_instance_is_pure_integrator():
    rng = np.random.default_rng(26)
    grid, game, x0 = random_instance(rng)
    dyn = linear_dynamics(game)
    t = np.linspace(0.0, 4.0, 17)
    expected = x0 + game.beta * np.array([eval_U(grid, float(s), x0) for s in t]) - game.xi * t
    np.testing.assert_allclose(generalized_flow(dyn, grid, x0, t), expected, atol=1e-12)


def test_logistic_map_domain_checked():
    dyn = logistic_dynamics(GameParams(0.5, 0.25))
    with pytest.raises(ValueError):
        dyn.v_fn(0.0)
    with pytest.raises(ValueError):
        dyn.v_fn(1.0)


def test_v_inv_prime_matches_fd():
    rng = np.random.default_rng(27)
    for make in (logistic_dynamics, linear_dynamics):
        dyn = make(GameParams(0.5, 0.25))
        y = rng.uniform(-3, 3, 11)
        h = 1e-6
        fd = (dyn.v_inv(y + h) - dyn.v_inv(y - h)) / (2 * h)
        np.testing.assert_allclose(dyn.v_inv_prime(y), fd, atol=1e-9)
