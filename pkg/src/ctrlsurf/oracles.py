"""Independent verification machinery.

Nothing in here reuses the closed-form flow or the analytic gradient: the
finite-difference gradient perturbs coefficients and re-evaluates the
objective, the integrator steps the raw ODE, and the reference solver
optimizes control node values directly with finite differences.  Agreement
between these oracles and the closed-form path is the evidence that the
closed-form path is right.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .cost import CostParams, FitProblem, QuadratureRule, TrainingSet
from .dynamics import GameParams
from .fourier import CoefficientGrid


class IntegrationBlowup(RuntimeError):
    """State left [0, 1] by more than the tolerance during integration."""


@dataclass(frozen=True)
class Trajectory:
    """State samples on a uniform time grid."""

    times: np.ndarray
    states: np.ndarray

    def final_state(self) -> float:
        return float(self.states[-1])


@dataclass(frozen=True)
class Surface:
    """Values sampled on a (t, x0) lattice; shape (len(t), len(x0))."""

    t_values: np.ndarray
    x0_values: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        x = np.asarray(self.x0_values, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size, x.size):
            raise ValueError(
                f"surface shape {v.shape} does not match lattice ({t.size}, {x.size})"
            )
        object.__setattr__(self, "t_values", t)
        object.__setattr__(self, "x0_values", x)
        object.__setattr__(self, "values", v)


class MapeResult(NamedTuple):
    percent: float
    excluded: int


# ---------------------------------------------------------------------------
# finite-difference gradient
# ---------------------------------------------------------------------------

def fd_gradient(
    grid: CoefficientGrid,
    game: GameParams,
    cost: CostParams,
    train: TrainingSet,
    quad: QuadratureRule,
    h: float = 1e-6,
) -> np.ndarray:
    """Central finite differences of the total objective, entry by entry."""
    if not (h > 0.0):
        raise ValueError("finite-difference step h must be positive")
    problem = FitProblem(grid, game, cost, train, quad)
    base = np.array(grid.coeffs)
    grad = np.zeros_like(base)
    for m in range(base.shape[0]):
        for n in range(base.shape[1]):
            saved = base[m, n]
            base[m, n] = saved + h
            j_plus = problem.objective(base)
            base[m, n] = saved - h
            j_minus = problem.objective(base)
            base[m, n] = saved
            grad[m, n] = (j_plus - j_minus) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# classical RK4 integration of the raw replicator ODE
# ---------------------------------------------------------------------------

def _control_samples(control: Callable, times: np.ndarray, mid: np.ndarray):
    """Evaluate u(t) on grid and midpoints, vectorized when the callable allows."""
    try:
        ug = np.asarray(control(times), dtype=float)
        um = np.asarray(control(mid), dtype=float)
        if ug.shape == times.shape and um.shape == mid.shape:
            return ug, um
    except Exception:
        pass
    ug = np.array([float(control(t)) for t in times])
    um = np.array([float(control(t)) for t in mid])
    return ug, um


def integrate_ode(
    game: GameParams,
    control: Callable,
    x0: float,
    step: float,
    horizon_T: float,
) -> Trajectory:
    """Integrate xdot = x(1-x)(beta*u(t) - xi) with classical RK4.

    The grid is uniform with the final point exactly at T.  ``control`` is
    any callable u(t); array-accepting callables are sampled in one shot.
    If the state escapes [0, 1] by more than 1e-9 the run aborts: that
    signals a bad step size or inconsistent dynamics, never a valid state.
    """
    if not (step > 0.0):
        raise ValueError("step must be positive")
    if not (0.0 < x0 < 1.0):
        raise ValueError(f"degenerate initial condition x0={x0}: need 0 < x0 < 1")
    n = max(1, int(round(horizon_T / step)))
    times = np.linspace(0.0, horizon_T, n + 1)
    h = horizon_T / n
    u_grid, u_mid = _control_samples(control, times, times[:-1] + h / 2.0)

    beta, xi = game.beta, game.xi

    def f(x, u):
        return x * (1.0 - x) * (beta * u - xi)

    states = np.empty(n + 1)
    states[0] = x0
    x = x0
    for k in range(n):
        k1 = f(x, u_grid[k])
        k2 = f(x + 0.5 * h * k1, u_mid[k])
        k3 = f(x + 0.5 * h * k2, u_mid[k])
        k4 = f(x + h * k3, u_grid[k + 1])
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if x < -1e-9 or x > 1.0 + 1e-9:
            raise IntegrationBlowup(
                f"state {x} escaped [0, 1] at t={times[k + 1]:.6g}; "
                "reduce the step or check the dynamics"
            )
        states[k + 1] = x
    return Trajectory(times, states)


# ---------------------------------------------------------------------------
# direct-collocation reference solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenefitParams:
    """Weights of the benefit objective int alpha*x*u - C*u^2 dt (maximized)."""

    alpha: float
    C: float


@dataclass
class ReferenceSolution:
    """Per-x0 reference optimum from direct collocation.

    ``converged`` must be checked by every consumer; an unconverged
    reference is reported, never silently used.
    """

    x0: float
    time_grid: np.ndarray
    control_values: np.ndarray
    state_values: np.ndarray
    objective: float
    converged: bool
    iterations: int
    objective_history: list = field(default_factory=list)


def _batch_rk4_states(
    game: GameParams, controls: np.ndarray, x0: float, times: np.ndarray
) -> np.ndarray:
    """States at the nodes for a batch of piecewise-linear node controls.

    ``controls`` has shape (B, n_nodes); each row is integrated with RK4 at
    one step per node interval, the midpoint control being the average of
    the endpoints (linear interpolation).
    """
    beta, xi = game.beta, game.xi
    B, n_nodes = controls.shape
    states = np.empty((B, n_nodes))
    states[:, 0] = x0
    x = np.full(B, x0)
    for k in range(n_nodes - 1):
        h = times[k + 1] - times[k]
        u0 = controls[:, k]
        u1 = controls[:, k + 1]
        um = 0.5 * (u0 + u1)
        k1 = x * (1.0 - x) * (beta * u0 - xi)
        x2 = x + 0.5 * h * k1
        k2 = x2 * (1.0 - x2) * (beta * um - xi)
        x3 = x + 0.5 * h * k2
        k3 = x3 * (1.0 - x3) * (beta * um - xi)
        x4 = x + h * k3
        k4 = x4 * (1.0 - x4) * (beta * u1 - xi)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[:, k + 1] = x
    return states


def solve_reference(
    x0: float,
    game: GameParams,
    benefit: BenefitParams,
    time_grid,
    nonneg: bool = True,
    grad_tol: float = 1e-6,
    max_iterations: int = 20_000,
    fd_step: float = 1e-6,
) -> ReferenceSolution:
    """Reference open-loop optimum for one initial condition.

    The control is one value per time node, piecewise-linear in between.
    The benefit objective is evaluated by RK4 over the node grid plus a
    trapezoid sum, and maximized by projected gradient ascent (projection:
    clamp u >= 0 when ``nonneg``) with central finite differences over the
    node values.  Stops when the projected node-gradient inf-norm falls
    below ``grad_tol``.

    Fully independent of the Fourier machinery: no basis tables, no
    closed-form flow, no analytic gradient.
    """
    if not (0.0 < x0 < 1.0):
        raise ValueError(f"degenerate initial condition x0={x0}: need 0 < x0 < 1")
    times = np.asarray(time_grid, dtype=float)
    n_nodes = times.size
    trap_w = np.empty(n_nodes)
    trap_w[1:-1] = 0.5 * (times[2:] - times[:-2])
    trap_w[0] = 0.5 * (times[1] - times[0])
    trap_w[-1] = 0.5 * (times[-1] - times[-2])

    def objective_batch(controls: np.ndarray) -> np.ndarray:
        states = _batch_rk4_states(game, controls, x0, times)
        running = benefit.alpha * states * controls - benefit.C * controls * controls
        return running @ trap_w

    def objective(u: np.ndarray) -> float:
        return float(objective_batch(u[None, :])[0])

    def gradient(u: np.ndarray) -> np.ndarray:
        batch = np.repeat(u[None, :], 2 * n_nodes, axis=0)
        idx = np.arange(n_nodes)
        batch[2 * idx, idx] += fd_step
        batch[2 * idx + 1, idx] -= fd_step
        values = objective_batch(batch)
        return (values[0::2] - values[1::2]) / (2.0 * fd_step)

    def projected(u: np.ndarray, g: np.ndarray) -> np.ndarray:
        if not nonneg:
            return g
        # at an active lower bound only ascent directions count
        return np.where((u > 0.0) | (g > 0.0), g, 0.0)

    u = np.zeros(n_nodes)
    obj = objective(u)
    grad = gradient(u)
    pg_norm = float(np.max(np.abs(projected(u, grad))))
    history = [obj]
    trial = 1.0
    iterations = 0

    while pg_norm >= grad_tol and iterations < max_iterations:
        step = trial
        accepted = False
        while step > 1e-18:
            u_next = u + step * grad
            if nonneg:
                np.maximum(u_next, 0.0, out=u_next)
            obj_next = objective(u_next)
            gain = float(grad @ (u_next - u))
            if np.isfinite(obj_next) and obj_next >= obj + 1e-4 * gain and obj_next >= obj:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        u, obj = u_next, obj_next
        history.append(obj)
        trial = step * 2.0
        grad = gradient(u)
        pg_norm = float(np.max(np.abs(projected(u, grad))))
        iterations += 1

    states = _batch_rk4_states(game, u[None, :], x0, times)[0]
    return ReferenceSolution(
        x0=x0,
        time_grid=times,
        control_values=u,
        state_values=states,
        objective=obj,
        converged=pg_norm < grad_tol,
        iterations=iterations,
        objective_history=history,
    )


# ---------------------------------------------------------------------------
# mean absolute percentage error
# ---------------------------------------------------------------------------

def mape(approx: Surface, reference: Surface, floor: float = 1e-6) -> MapeResult:
    """MAPE of ``approx`` against ``reference`` over their shared lattice.

    Points where |reference| < floor are excluded (the percentage metric is
    singular there); the number of exclusions is part of the result so the
    metric stays auditable.
    """
    if not (
        np.array_equal(approx.t_values, reference.t_values)
        and np.array_equal(approx.x0_values, reference.x0_values)
    ):
        raise ValueError("surfaces must share an identical (t, x0) lattice")
    ref = reference.values
    keep = np.abs(ref) >= floor
    excluded = int(ref.size - np.count_nonzero(keep))
    if excluded == ref.size:
        raise ValueError("no reference points above the floor: MAPE undefined")
    rel = np.abs(ref[keep] - approx.values[keep]) / np.abs(ref[keep])
    return MapeResult(float(100.0 * np.mean(rel)), excluded)
