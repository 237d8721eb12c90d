"""Descent loop: convergence, determinism, divergence, and a grid-search oracle."""

import numpy as np
import pytest

from ctrlsurf.cost import CostParams, QuadratureRule, TrainingSet
from ctrlsurf.descent import (
    DescentConfig,
    DescentDiverged,
    gradient_norm,
    minimize,
)
from ctrlsurf.dynamics import GameParams
from ctrlsurf.fourier import CoefficientGrid
from ctrlsurf.oracles import fd_gradient

QUAD = QuadratureRule("simpson", 0.05)
PURE_CONTROL = CostParams(0.0, 0.0, 1.0)


def test_gradient_norm_is_max_abs():
    assert gradient_norm(np.zeros((3, 3))) == 0.0
    g = np.zeros((2, 2))
    g[1, 0] = 0.3
    assert gradient_norm(g) == 0.3
    assert gradient_norm(np.full((4, 4), -2.0)) == 2.0


def test_pure_control_penalty_converges_to_zero():
    # strictly convex quadratic in the coefficients with minimum at the origin
    rng = np.random.default_rng(50)
    game = GameParams(0.5, 0.25)
    # three training columns: the cosine design matrix over x0 has full rank,
    # so the quadratic is strictly convex and the origin is the unique optimum
    train = TrainingSet((0.2, 0.45, 0.8))
    config = DescentConfig()
    for _ in range(4):
        initial = CoefficientGrid(rng.uniform(-1, 1, (3, 3)), 4.0, 1.0)
        report = minimize(initial, game, PURE_CONTROL, train, QUAD, config)
        assert report.converged
        assert np.max(np.abs(report.final_coeffs.coeffs)) <= 1e-3
        assert report.final_objective == pytest.approx(0.0, abs=1e-5)
        diffs = np.diff(report.objective_history)
        assert np.all(diffs <= 0.0)


def test_decoupled_dynamics_converge_to_zero():
    # beta=0: the state cost is a constant offset, control penalty decides
    game = GameParams(0.0, 0.25)
    cost = CostParams(2.0, 0.0, 1.0)
    initial = CoefficientGrid(0.5 * np.ones((2, 2)), 4.0, 1.0)
    report = minimize(initial, game, cost, TrainingSet((0.4, 0.6)), QUAD, DescentConfig())
    assert report.converged
    assert np.max(np.abs(report.final_coeffs.coeffs)) <= 1e-3


def test_converged_flag_tracks_final_norm():
    game = GameParams(0.5, 0.25)
    initial = CoefficientGrid(np.full((2, 2), 0.3), 4.0, 1.0)
    done = minimize(initial, game, PURE_CONTROL, TrainingSet((0.5,)), QUAD, DescentConfig())
    assert done.converged and done.final_grad_norm < 1e-4
    capped = minimize(
        initial,
        game,
        PURE_CONTROL,
        TrainingSet((0.5,)),
        QUAD,
        DescentConfig(grad_tolerance=1e-300, max_iterations=5),
    )
    assert not capped.converged
    assert capped.iterations == 5
    assert len(capped.objective_history) == 6


def test_stationarity_cross_checked_by_fd():
    game = GameParams(0.5, 0.25)
    cost = CostParams(0.0, -2.0, 2.0)
    train = TrainingSet.from_range(0.1, 0.9, 0.2)
    initial = CoefficientGrid.zeros(2, 2, 4.0, 1.0)
    report = minimize(initial, game, cost, train, QUAD, DescentConfig())
    assert report.converged
    fd = fd_gradient(report.final_coeffs, game, cost, train, QUAD, h=1e-6)
    assert np.max(np.abs(fd)) < 10 * 1e-4


def test_histories_are_deterministic():
    game = GameParams(0.5, 0.25)
    cost = CostParams(1.0, -1.0, 1.5)
    train = TrainingSet((0.3, 0.7))
    initial = CoefficientGrid(np.full((2, 2), 0.4), 4.0, 1.0)
    for config in (
        DescentConfig(),
        DescentConfig(step_rule="fixed", learning_rate=0.05, max_iterations=200),
    ):
        a = minimize(initial, game, cost, train, QUAD, config)
        b = minimize(initial, game, cost, train, QUAD, config)
        assert a.objective_history == b.objective_history
        assert a.grad_norm_history == b.grad_norm_history
        assert a.step_history == b.step_history
        np.testing.assert_array_equal(a.final_coeffs.coeffs, b.final_coeffs.coeffs)


def test_fixed_rate_divergence_detected():
    initial = CoefficientGrid(np.full((2, 2), 0.5), 4.0, 1.0)
    config = DescentConfig(step_rule="fixed", learning_rate=10.0, max_iterations=1000)
    with pytest.raises(DescentDiverged) as excinfo:
        minimize(initial, GameParams(0.5, 0.25), PURE_CONTROL, TrainingSet((0.5,)), QUAD, config)
    report = excinfo.value.report
    assert not report.converged
    assert np.all(np.isfinite(report.objective_history))
    assert np.all(np.isfinite(report.final_coeffs.coeffs))
    assert len(report.objective_history) == report.iterations + 1


def test_gradient_override_reaches_same_optimum():
    # the benchmark swaps in the FD oracle; the fit must land in the same place
    game = GameParams(0.5, 0.25)
    cost = CostParams(0.0, -2.0, 2.0)
    train = TrainingSet((0.4, 0.6))
    initial = CoefficientGrid.zeros(1, 1, 4.0, 1.0)
    analytic = minimize(initial, game, cost, train, QUAD, DescentConfig())
    fd = minimize(
        initial,
        game,
        cost,
        train,
        QUAD,
        DescentConfig(),
        gradient=lambda a: fd_gradient(initial.with_coeffs(a), game, cost, train, QUAD),
    )
    assert fd.final_objective == pytest.approx(analytic.final_objective, abs=1e-8)
    np.testing.assert_allclose(
        fd.final_coeffs.coeffs, analytic.final_coeffs.coeffs, atol=1e-4
    )


def test_trace_round_trips(tmp_path):
    game = GameParams(0.5, 0.25)
    initial = CoefficientGrid(np.full((2, 2), 0.3), 4.0, 1.0)
    report = minimize(initial, game, PURE_CONTROL, TrainingSet((0.5,)), QUAD, DescentConfig())
    path = tmp_path / "trace.csv"
    report.write_trace(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iteration,objective,grad_norm,step"
    assert len(lines) - 1 == report.iterations + 1
    objectives = [float(line.split(",")[1]) for line in lines[1:]]
    assert objectives == report.objective_history


def test_config_validation():
    with pytest.raises(ValueError):
        DescentConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        DescentConfig(grad_tolerance=-1e-4)
    with pytest.raises(ValueError):
        DescentConfig(max_iterations=0)
    with pytest.raises(ValueError):
        DescentConfig(step_rule="momentum")
    with pytest.raises(ValueError):
        DescentConfig(armijo_c=1.5)
    with pytest.raises(ValueError):
        DescentConfig(shrink=0.0)


# -- grid-search oracle for the smallest order ------------------------------
#
# For M=N=1 the surface has 4 coefficients, few enough for a staged zooming
# grid search over the raw objective.  The search below reimplements the
# objective as one batched einsum per x0 (no FitProblem, no gradients) and
# never looks at the descent path, so agreement is meaningful.

def batched_objective(avec, game, cost, train, t, w):
    """Objective for a batch of (1,1) coefficient vectors, shape (B, 4)."""
    C = np.stack([np.ones_like(t), np.cos(np.pi * t / 4.0)])          # (2, nt)
    S = np.stack([t, np.sin(np.pi * t / 4.0) * 4.0 / np.pi])          # (2, nt)
    total = np.zeros(avec.shape[0])
    a = avec.reshape(-1, 2, 2)
    for x0 in train.x0_values:
        cx = np.array([1.0, np.cos(np.pi * x0)])
        am = a @ cx                                                   # (B, 2)
        u = am @ C                                                    # (B, nt)
        z = game.beta * (am @ S) - game.xi * t + np.log(x0 / (1 - x0))
        z = np.clip(z, -700, 700)
        phi = np.where(z >= 0, 1 / (1 + np.exp(-z)), np.exp(z) / (1 + np.exp(z)))
        integrand = 0.5 * cost.k1 * phi**2 + cost.R * phi * u + 0.5 * cost.k2 * u**2
        total += integrand @ w
    return total


def staged_grid_search(game, cost, train, t, w):
    center = np.zeros(4)
    half = 2.0
    offsets = np.linspace(-1.0, 1.0, 9)
    mesh = np.stack(np.meshgrid(*([offsets] * 4), indexing="ij"), axis=-1).reshape(-1, 4)
    best_val = np.inf
    best = center
    while half * 0.25 > 1e-4 / 2:  # stage step = half/4, stop once below 1e-4
        points = center + half * mesh
        values = np.empty(points.shape[0])
        for start in range(0, points.shape[0], 2048):
            chunk = points[start : start + 2048]
            values[start : start + chunk.shape[0]] = batched_objective(
                chunk, game, cost, train, t, w
            )
        k = int(np.argmin(values))
        if values[k] < best_val:
            best_val = float(values[k])
            best = points[k]
        center = points[k]
        half *= 0.3
    return best, best_val


def test_order_one_fit_matches_grid_search():
    # benchmark-problem weights: minimize -2*x*u + u^2 over 19 start points
    game = GameParams(0.5, 0.25)
    cost = CostParams(0.0, -2.0, 2.0)
    train = TrainingSet.from_range(0.05, 0.95, 0.05)
    initial = CoefficientGrid.zeros(1, 1, 4.0, 1.0)
    report = minimize(initial, game, cost, train, QUAD, DescentConfig())
    assert report.converged

    t = QUAD.nodes(4.0)
    w = QUAD.weights(4.0)
    a_search, j_search = staged_grid_search(game, cost, train, t, w)
    assert report.final_objective == pytest.approx(j_search, abs=1e-3)
    np.testing.assert_allclose(
        report.final_coeffs.coeffs.ravel(), a_search, atol=5e-3
    )
