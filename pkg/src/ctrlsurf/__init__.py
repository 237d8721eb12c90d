"""Fourier-series control surfaces for two-strategy evolutionary game dynamics.

Fits u(t, x0) = sum_mn a_mn cos(m pi t / T) cos(n pi x0 / L) to minimize a
quadratic running cost along the closed-form controlled replicator flow, by
gradient descent with exact analytic gradients.  Ships its own referees:
finite-difference gradients, Runge-Kutta integration, and a direct
collocation solver.
"""

from .cost import (
    CostParams,
    FitProblem,
    QuadratureRule,
    RunningCost,
    TrainingSet,
    grad_j,
    grad_j_generalized,
    j_single,
    j_total,
    j_total_generalized,
    quadratic_running_cost,
)
from .descent import DescentConfig, DescentDiverged, FitReport, minimize
from .dynamics import (
    FlowContext,
    GameParams,
    GeneralizedDynamics,
    dphi_da,
    dphi_dV,
    eval_K,
    eval_phi,
    eval_V,
    generalized_flow,
    linear_dynamics,
    logistic_dynamics,
)
from .experiment import (
    ExperimentConfig,
    MonotoneReport,
    check_monotone_decreasing,
    map_to_lagrange,
    negativity_fraction,
    run_experiment,
    timing_benchmark,
)
from .fourier import (
    CoefficientGrid,
    dU_da,
    du_da,
    eval_U,
    eval_u,
    sample_surface,
)
from .oracles import (
    BenefitParams,
    IntegrationBlowup,
    MapeResult,
    ReferenceSolution,
    Surface,
    Trajectory,
    fd_gradient,
    integrate_ode,
    mape,
    solve_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BenefitParams",
    "CoefficientGrid",
    "CostParams",
    "DescentConfig",
    "DescentDiverged",
    "ExperimentConfig",
    "FitProblem",
    "FitReport",
    "FlowContext",
    "GameParams",
    "GeneralizedDynamics",
    "IntegrationBlowup",
    "MapeResult",
    "MonotoneReport",
    "QuadratureRule",
    "ReferenceSolution",
    "RunningCost",
    "Surface",
    "TrainingSet",
    "Trajectory",
    "check_monotone_decreasing",
    "dU_da",
    "dphi_dV",
    "dphi_da",
    "du_da",
    "eval_K",
    "eval_U",
    "eval_V",
    "eval_phi",
    "eval_u",
    "fd_gradient",
    "generalized_flow",
    "grad_j",
    "grad_j_generalized",
    "integrate_ode",
    "j_single",
    "j_total",
    "j_total_generalized",
    "linear_dynamics",
    "logistic_dynamics",
    "map_to_lagrange",
    "mape",
    "minimize",
    "negativity_fraction",
    "quadratic_running_cost",
    "run_experiment",
    "sample_surface",
    "solve_reference",
    "timing_benchmark",
]
