"""Gradient descent over the Fourier coefficient space.

The update is a <- a - alpha * grad J(a), iterated until the max-abs entry of
the gradient drops below the tolerance or the iteration cap is hit.  Two step
rules:

    fixed         the literal constant-rate loop (used by the timing
                  benchmark so both gradient arms do identical work)
    backtracking  Armijo line search from a unit trial step; guarantees a
                  non-increasing objective regardless of problem scaling

The loop itself is deterministic and sequential; all heavy lifting happens in
``cost.FitProblem`` which is constructed once per call.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cost import CostParams, FitProblem, QuadratureRule, TrainingSet
from .dynamics import GameParams
from .fourier import CoefficientGrid

# fixed-rate runs abort once the objective exceeds this multiple of the
# initial scale; backtracking cannot blow up so it skips the check
_DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class DescentConfig:
    """Descent hyperparameters.

    ``learning_rate`` is the constant step in fixed mode and the initial
    trial step under backtracking.  The gradient tolerance applies to the
    max-abs entry of the gradient, which keeps stopping comparable across
    coefficient-grid sizes.
    """

    learning_rate: float = 1.0
    grad_tolerance: float = 1e-4
    max_iterations: int = 50_000
    step_rule: str = "backtracking"
    armijo_c: float = 1e-4
    shrink: float = 0.5

    def __post_init__(self):
        if not (self.learning_rate > 0.0):
            raise ValueError("learning_rate must be positive")
        if not (self.grad_tolerance > 0.0):
            raise ValueError("grad_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not (0.0 < self.armijo_c < 1.0) or not (0.0 < self.shrink < 1.0):
            raise ValueError("armijo_c and shrink must lie in (0, 1)")


@dataclass
class FitReport:
    """Outcome of one descent run, histories included."""

    final_coeffs: CoefficientGrid
    iterations: int
    objective_history: list
    grad_norm_history: list
    step_history: list
    converged: bool
    wall_time: float

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1]

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norm_history[-1]

    def write_trace(self, path) -> None:
        """Per-iteration CSV: iteration, objective, grad inf-norm, step size."""
        with open(path, "w") as fh:
            fh.write("iteration,objective,grad_norm,step\n")
            for k, (obj, gn) in enumerate(
                zip(self.objective_history, self.grad_norm_history)
            ):
                step = self.step_history[k - 1] if k >= 1 else ""
                fh.write(f"{k},{obj:.17g},{gn:.17g},{step}\n")


class DescentDiverged(RuntimeError):
    """Raised when the objective or gradient stops being finite mid-run.

    Carries the last finite state so callers can inspect how far the run got.
    """

    def __init__(self, message: str, report: FitReport):
        super().__init__(message)
        self.report = report


def gradient_norm(g: np.ndarray) -> float:
    """Max-absolute-entry norm used for the stopping test."""
    return float(np.max(np.abs(g)))


def minimize(
    initial: CoefficientGrid,
    game: GameParams,
    cost: CostParams,
    train: TrainingSet,
    quad: QuadratureRule,
    config: DescentConfig,
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> FitReport:
    """Run gradient descent from ``initial`` and report the trajectory.

    ``gradient``, when given, replaces the analytic gradient with any
    callable mapping a coefficient matrix to a same-shaped matrix (the
    timing benchmark passes the finite-difference oracle here).  The
    objective is always the exact quadrature objective.
    """
    problem = FitProblem(initial, game, cost, train, quad)
    grad_fn = gradient if gradient is not None else problem.gradient

    start = time.perf_counter()
    a = np.array(initial.coeffs)
    obj = problem.objective(a)
    grad = np.asarray(grad_fn(a))
    norm = gradient_norm(grad)

    objective_history = [obj]
    grad_norm_history = [norm]
    step_history: list = []

    def report(iterations: int, converged: bool) -> FitReport:
        return FitReport(
            final_coeffs=initial.with_coeffs(a),
            iterations=iterations,
            objective_history=objective_history,
            grad_norm_history=grad_norm_history,
            step_history=step_history,
            converged=converged,
            wall_time=time.perf_counter() - start,
        )

    if not (np.isfinite(obj) and norm < np.inf):
        raise DescentDiverged("objective or gradient non-finite at start", report(0, False))

    blowup = _DIVERGENCE_FACTOR * (1.0 + abs(obj))
    k = 0
    while norm >= config.grad_tolerance and k < config.max_iterations:
        if config.step_rule == "fixed":
            step = config.learning_rate
            a_next = a - step * grad
            obj_next = problem.objective(a_next)
            if not np.isfinite(obj_next) or obj_next > blowup:
                raise DescentDiverged(
                    f"fixed-rate descent diverged at iteration {k}", report(k, False)
                )
        else:
            step = config.learning_rate
            slope = float(np.sum(grad * grad))  # -directional derivative along -grad
            while True:
                a_next = a - step * grad
                obj_next = problem.objective(a_next)
                if np.isfinite(obj_next) and obj_next <= obj - config.armijo_c * step * slope:
                    break
                step *= config.shrink
                if step < 1e-20:
                    # gradient too noisy to make progress; stop where we are
                    return report(k, norm < config.grad_tolerance)

        grad_next = np.asarray(grad_fn(a_next))
        if not np.all(np.isfinite(grad_next)):
            # report the last iterate at which everything was still finite
            raise DescentDiverged(
                f"gradient non-finite at iteration {k + 1}", report(k, False)
            )
        a, obj, grad = a_next, obj_next, grad_next
        norm = gradient_norm(grad)
        objective_history.append(obj)
        grad_norm_history.append(norm)
        step_history.append(step)
        k += 1

    return report(k, norm < config.grad_tolerance)
