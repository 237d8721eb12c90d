"""Closed-form flow of the controlled two-strategy replicator equation.

With the payoff rate affine in the control, rho = beta*u - xi, the reduced
replicator ODE

    xdot = x (1 - x) (beta*u(t, x0) - xi),    x(0) = x0 in (0, 1)

separates: ln(x/(1-x)) picks up exactly V(t) = beta*U(t, x0) - xi*t, where U
is the closed-form time-integral of the cosine series.  The flow is therefore

    phi(t) = 1 / (1 + K * exp(-V(t))),    K = ((1-x0)/x0) * exp(V(0)),

a logistic curve driven by V.  Note the sign: exp(-V), so positive V (net
growth) pushes phi toward 1.  This is the form whose derivative matches
d(phi)/dV = K e^V / (K + e^V)^2 = phi(1-phi) > 0, and it is cross-checked
against direct ODE integration in the test suite.

The same separation argument works for any dynamics of the form
v(x) xdot = w(u): with an antiderivative map V_fn of v, the state is
V_fn^{-1}(int w(u) + V_fn(x0)).  ``GeneralizedDynamics`` captures that
interface for the affine case w(u) = beta*u - xi, with the replicator
(logistic map) and the pure integrator (identity map) as instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fourier import CoefficientGrid, eval_U, dU_da, _scalar_or_array

# exp overflow guard; |V| beyond ~30 already saturates phi to 0/1 at machine
# precision, so clamping cannot change any finite result
_V_CLAMP = 700.0


@dataclass(frozen=True)
class GameParams:
    """Dynamics constants: control gain beta and uncontrolled rate xi."""

    beta: float
    xi: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.xi)):
            raise ValueError("beta and xi must be finite")


@dataclass(frozen=True)
class FlowContext:
    """A coefficient grid, game parameters, and one interior initial state.

    x0 = 0 and x0 = 1 are fixed points of the replicator and make the
    integration constant K degenerate, so they are rejected.
    """

    grid: CoefficientGrid
    params: GameParams
    x0: float

    def __post_init__(self):
        if not (0.0 < self.x0 < 1.0):
            raise ValueError(
                f"degenerate initial condition x0={self.x0}: need 0 < x0 < 1"
            )


def eval_V(ctx: FlowContext, t):
    """Accumulated log-odds drive V(t) = beta*U(t, x0) - xi*t; V(0) = 0."""
    U = np.asarray(eval_U(ctx.grid, t, ctx.x0), dtype=float)
    values = ctx.params.beta * U - ctx.params.xi * np.asarray(t, dtype=float)
    return _scalar_or_array(values, t)


def eval_K(ctx: FlowContext) -> float:
    """Integration constant K = ((1-x0)/x0) * exp(V(0)).

    V(0) = 0 for the cosine basis (U(0) = 0), but the factor is kept so the
    formula stays correct for any basis with a nonzero integral at t = 0.
    """
    v0 = eval_V(ctx, 0.0)
    return (1.0 - ctx.x0) / ctx.x0 * math.exp(v0)


def _log_K(ctx: FlowContext) -> float:
    return math.log((1.0 - ctx.x0) / ctx.x0) + eval_V(ctx, 0.0)


def _sigmoid(z):
    z = np.clip(z, -_V_CLAMP, _V_CLAMP)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def eval_phi(ctx: FlowContext, t):
    """Closed-form state phi(t) = 1/(1 + K exp(-V(t))), always in (0, 1).

    Evaluated as sigmoid(V - log K) with V clamped, so runaway coefficients
    mid-descent saturate the flow to 0/1 instead of producing NaN.
    """
    V = np.asarray(eval_V(ctx, t), dtype=float)
    z = np.clip(V, -_V_CLAMP, _V_CLAMP) - _log_K(ctx)
    return _scalar_or_array(_sigmoid(z), t)


def dphi_dV(ctx: FlowContext, t):
    """Sensitivity of the flow to its drive: K e^V/(K + e^V)^2 = phi(1-phi)."""
    phi = np.asarray(eval_phi(ctx, t), dtype=float)
    return _scalar_or_array(phi * (1.0 - phi), t)


def dphi_da(ctx: FlowContext, m: int, n: int, t):
    """Chain rule dphi/da[m,n] = (dphi/dV) * beta * dU/da[m,n].

    dV/dU = beta; K does not depend on the coefficients because U(0) = 0.
    """
    sens = np.asarray(dphi_dV(ctx, t), dtype=float)
    basis = np.asarray(dU_da(ctx.grid, m, n, t, ctx.x0), dtype=float)
    return _scalar_or_array(sens * ctx.params.beta * basis, t)


# ---------------------------------------------------------------------------
# generalized separable dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneralizedDynamics:
    """Separable dynamics v(x) xdot = w(u) with w affine: w(u) = beta*u - xi.

    ``v_fn`` is the state-side antiderivative (v_fn' = v), ``v_inv`` its
    inverse on the declared state domain and ``v_inv_prime`` the derivative
    of the inverse, needed by the generic gradient path.  Only the affine w
    is supported: it is what gives the control integral the closed form
    beta*U(t) - xi*t.
    """

    name: str
    params: GameParams
    v_fn: Callable
    v_inv: Callable
    v_inv_prime: Callable


def logistic_dynamics(params: GameParams) -> GeneralizedDynamics:
    """Replicator instance: v_fn(x) = ln(x/(1-x)) on (0, 1)."""

    def v_fn(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise ValueError("logistic state map needs x in (0, 1)")
        return np.log(x / (1.0 - x))

    def v_inv(y):
        return _sigmoid(np.asarray(y, dtype=float))

    def v_inv_prime(y):
        s = v_inv(y)
        return s * (1.0 - s)

    return GeneralizedDynamics("logistic", params, v_fn, v_inv, v_inv_prime)


def linear_dynamics(params: GameParams) -> GeneralizedDynamics:
    """Pure integrator instance: xdot = beta*u - xi, v_fn = identity."""
    return GeneralizedDynamics(
        "linear",
        params,
        lambda x: np.asarray(x, dtype=float),
        lambda y: np.asarray(y, dtype=float),
        lambda y: np.ones_like(np.asarray(y, dtype=float)),
    )


def generalized_flow(dyn: GeneralizedDynamics, grid: CoefficientGrid, x0: float, t):
    """State x(t) = v_inv(V(t) + v_fn(x0)) under the separable dynamics."""
    U = np.asarray(eval_U(grid, t, x0), dtype=float)
    V = dyn.params.beta * U - dyn.params.xi * np.asarray(t, dtype=float)
    values = dyn.v_inv(V + dyn.v_fn(x0))
    return _scalar_or_array(np.asarray(values, dtype=float), t)
