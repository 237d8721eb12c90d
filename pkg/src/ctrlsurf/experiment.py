"""End-to-end experiment pipeline around the epidemic-intervention problem.

The benefit-maximization problem

    max_u  int_0^T alpha*x*u - C*u^2 dt,   xdot = x(1-x)(beta*u - xi),  u >= 0

is rewritten as a quadratic running-cost minimization (k1, R, k2) =
(0, -alpha, 2C), fitted over a sweep of Fourier orders, and scored against
the direct-collocation reference by control- and state-surface MAPE.  A
timing benchmark pits the analytic gradient against the finite-difference
gradient under identical fixed-rate descent.  Everything is written out as
plot-ready CSV plus a JSON summary; nothing here draws figures.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .cost import CostParams, QuadratureRule, TrainingSet
from .descent import DescentConfig, FitReport, minimize
from .dynamics import FlowContext, GameParams, eval_phi
from .fourier import CoefficientGrid, sample_surface
from .oracles import (
    BenefitParams,
    ReferenceSolution,
    Surface,
    fd_gradient,
    mape,
    solve_reference,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MAPE_FLOOR = 1e-6
NEGATIVITY_CUTOFF = -0.01
MONOTONE_TOLERANCE = 0.02


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description; the defaults reproduce the benchmark
    problem (alpha=2, C=1, beta=1/2, xi=1/4, T=4, orders 1..5, gradient
    tolerance 1e-4, evaluation lattice t step 0.05 and x0 step 0.05)."""

    alpha: float = 2.0
    C: float = 1.0
    beta: float = 0.5
    xi: float = 0.25
    T: float = 4.0
    L: float = 1.0
    training_x0: tuple = (0.05, 0.95, 0.05)  # start, stop, step
    eval_grid: tuple = (0.05, 0.05)          # t step, x0 step
    fourier_orders: tuple = ((1, 1), (2, 2), (3, 3), (4, 4), (5, 5))
    descent: DescentConfig = DescentConfig()
    output_dir: str = "results"

    def game(self) -> GameParams:
        return GameParams(self.beta, self.xi)

    def training_set(self) -> TrainingSet:
        return TrainingSet.from_range(*self.training_x0)

    def quadrature(self) -> QuadratureRule:
        return QuadratureRule("simpson", self.eval_grid[0])

    def eval_t_values(self) -> np.ndarray:
        count = int(round(self.T / self.eval_grid[0]))
        return np.linspace(0.0, self.T, count + 1)

    def eval_x0_values(self) -> np.ndarray:
        """Interior multiples of the x0 step: {h, 2h, ...} strictly below 1."""
        h = self.eval_grid[1]
        count = int(np.ceil(1.0 / h)) - 1
        values = h * np.arange(1, count + 1)
        return values[values < 1.0 - 1e-9]

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        exp = data.get("experiment", {})
        kwargs = {
            key: exp[key]
            for key in ("alpha", "C", "beta", "xi", "T", "L", "output_dir")
            if key in exp
        }
        if "fourier_orders" in exp:
            kwargs["fourier_orders"] = tuple(
                (int(m), int(n)) for m, n in exp["fourier_orders"]
            )
        if "training_x0" in data:
            t = data["training_x0"]
            kwargs["training_x0"] = (t["start"], t["stop"], t["step"])
        if "eval_grid" in data:
            g = data["eval_grid"]
            kwargs["eval_grid"] = (g["t_step"], g["x0_step"])
        if "descent" in data:
            kwargs["descent"] = DescentConfig(**data["descent"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["descent"] = asdict(self.descent)
        return d


def map_to_lagrange(cfg: ExperimentConfig) -> CostParams:
    """Rewrite max int alpha*x*u - C*u^2 as min int -alpha*x*u + C*u^2.

    In quadratic running-cost weights: k1 = 0, R = -alpha, k2 = 2C, so that
    R*x*u + (k2/2)*u^2 = -alpha*x*u + C*u^2.  The minimized objective equals
    the negated benefit.
    """
    return CostParams(k1=0.0, R=-cfg.alpha, k2=2.0 * cfg.C)


# ---------------------------------------------------------------------------
# surface construction and CSV exchange
# ---------------------------------------------------------------------------

def control_surface(grid: CoefficientGrid, t_values, x0_values) -> Surface:
    return Surface(t_values, x0_values, sample_surface(grid, t_values, x0_values))


def state_surface(
    grid: CoefficientGrid, game: GameParams, t_values, x0_values
) -> Surface:
    columns = [
        np.asarray(eval_phi(FlowContext(grid, game, x0), np.asarray(t_values)))
        for x0 in x0_values
    ]
    return Surface(t_values, x0_values, np.column_stack(columns))


def write_lattice_csv(path, t_values, x0_values, columns: dict) -> None:
    """Rows are (t, x0, value...) row-major over t then x0, 17 digits."""
    names = list(columns)
    mats = [np.asarray(columns[k]) for k in names]
    with open(path, "w") as fh:
        fh.write("t,x0," + ",".join(names) + "\n")
        for i, t in enumerate(t_values):
            for j, x0 in enumerate(x0_values):
                vals = ",".join(f"{m[i, j]:.17g}" for m in mats)
                fh.write(f"{t:.17g},{x0:.17g},{vals}\n")


def read_lattice_csv(path, column: str) -> Surface:
    """Rebuild one surface column from a lattice CSV written above."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        idx = header.index(column)
        t_seen: list = []
        x_seen: list = []
        values: list = []
        for line in fh:
            parts = line.strip().split(",")
            t, x0, v = float(parts[0]), float(parts[1]), float(parts[idx])
            if not t_seen or t != t_seen[-1]:
                t_seen.append(t)
            if len(t_seen) == 1:
                x_seen.append(x0)
            values.append(v)
    mat = np.asarray(values).reshape(len(t_seen), len(x_seen))
    return Surface(np.asarray(t_seen), np.asarray(x_seen), mat)


# ---------------------------------------------------------------------------
# surface diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneReport:
    """Largest increase of u along t, per the decreasing-in-time check."""

    passed: bool
    max_violation: float
    at_t: float
    at_x0: float

    def to_dict(self) -> dict:
        return asdict(self)


def check_monotone_decreasing(surface: Surface, tolerance: float) -> MonotoneReport:
    """Verify u(t_{i+1}, x0) <= u(t_i, x0) + tolerance for every x0 column."""
    increases = np.diff(surface.values, axis=0)
    i, j = np.unravel_index(np.argmax(increases), increases.shape)
    worst = float(increases[i, j])
    return MonotoneReport(
        passed=bool(worst <= tolerance),
        max_violation=worst,
        at_t=float(surface.t_values[i + 1]),
        at_x0=float(surface.x0_values[j]),
    )


def negativity_fraction(surface: Surface, cutoff: float = NEGATIVITY_CUTOFF) -> float:
    """Fraction of lattice points where the control dips below the cutoff."""
    return float(np.mean(surface.values < cutoff))


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    M: int
    N: int
    objective: float
    iterations: int
    converged: bool
    grad_norm: float
    control_mape: float
    control_excluded: int
    state_mape: float
    state_excluded: int
    monotone: MonotoneReport
    neg_fraction: float
    fit_seconds: float
    flagged: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["monotone"] = self.monotone.to_dict()
        return d


@dataclass
class BenchRow:
    M: int
    N: int
    coefficients: int
    iterations: int
    analytic_seconds: float
    fd_seconds: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    rows: list
    references: list
    bench: list
    reports: dict = field(default_factory=dict)

    @property
    def exit_status(self) -> int:
        flagged = any(r.flagged for r in self.rows)
        unconverged_ref = any(not r.converged for r in self.references)
        return 1 if (flagged or unconverged_ref) else 0


def compute_references(cfg: ExperimentConfig, x0_values=None, t_values=None) -> list:
    """Per-x0 collocation references on the evaluation lattice."""
    t = cfg.eval_t_values() if t_values is None else np.asarray(t_values)
    xs = cfg.eval_x0_values() if x0_values is None else np.asarray(x0_values)
    benefit = BenefitParams(cfg.alpha, cfg.C)
    return [solve_reference(x0, cfg.game(), benefit, t, nonneg=True) for x0 in xs]


def reference_surfaces(references: list) -> tuple:
    """Stack per-x0 references into control and state surfaces."""
    t = references[0].time_grid
    xs = np.asarray([r.x0 for r in references])
    u = np.column_stack([r.control_values for r in references])
    x = np.column_stack([r.state_values for r in references])
    return Surface(t, xs, u), Surface(t, xs, x)


def fit_order(
    cfg: ExperimentConfig, M: int, N: int, trace_path=None
) -> FitReport:
    """Fit one (M, N) order from the zero initialization."""
    initial = CoefficientGrid.zeros(M, N, cfg.T, cfg.L)
    report = minimize(
        initial,
        cfg.game(),
        map_to_lagrange(cfg),
        cfg.training_set(),
        cfg.quadrature(),
        cfg.descent,
    )
    if trace_path is not None:
        report.write_trace(trace_path)
    return report


def evaluate_fit(
    cfg: ExperimentConfig,
    fit: FitReport,
    ref_control: Surface,
    ref_state: Surface,
) -> SweepRow:
    grid = fit.final_coeffs
    t, xs = ref_control.t_values, ref_control.x0_values
    u_surf = control_surface(grid, t, xs)
    x_surf = state_surface(grid, cfg.game(), t, xs)
    c_mape = mape(u_surf, ref_control, MAPE_FLOOR)
    s_mape = mape(x_surf, ref_state, MAPE_FLOOR)
    mono = check_monotone_decreasing(u_surf, MONOTONE_TOLERANCE)
    return SweepRow(
        M=grid.M,
        N=grid.N,
        objective=fit.final_objective,
        iterations=fit.iterations,
        converged=fit.converged,
        grad_norm=fit.final_grad_norm,
        control_mape=c_mape.percent,
        control_excluded=c_mape.excluded,
        state_mape=s_mape.percent,
        state_excluded=s_mape.excluded,
        monotone=mono,
        neg_fraction=negativity_fraction(u_surf),
        fit_seconds=fit.wall_time,
        flagged=not fit.converged,
    )


def timing_benchmark(
    cfg: ExperimentConfig,
    orders,
    iterations: int = 300,
    learning_rate: float = 0.002,
    fd_step: float = 1e-6,
) -> list:
    """Analytic-vs-FD gradient wall time under identical fixed-rate descent.

    Both arms run exactly ``iterations`` steps (the gradient tolerance is
    set unreachably small), from the same zero initialization, so the
    comparison isolates the per-iteration gradient cost.
    """
    game, lagrange = cfg.game(), map_to_lagrange(cfg)
    train, quad = cfg.training_set(), cfg.quadrature()
    bench_cfg = DescentConfig(
        learning_rate=learning_rate,
        grad_tolerance=1e-300,
        max_iterations=iterations,
        step_rule="fixed",
    )
    rows = []
    for M, N in orders:
        initial = CoefficientGrid.zeros(M, N, cfg.T, cfg.L)

        def fd_arm(a, _template=initial):
            return fd_gradient(_template.with_coeffs(a), game, lagrange, train, quad, fd_step)

        analytic = minimize(initial, game, lagrange, train, quad, bench_cfg)
        approx = minimize(initial, game, lagrange, train, quad, bench_cfg, gradient=fd_arm)
        if analytic.iterations != approx.iterations:
            raise RuntimeError(
                f"benchmark arms disagree on iteration count at order ({M},{N}): "
                f"{analytic.iterations} vs {approx.iterations}"
            )
        rows.append(
            BenchRow(
                M=M,
                N=N,
                coefficients=(M + 1) * (N + 1),
                iterations=analytic.iterations,
                analytic_seconds=analytic.wall_time,
                fd_seconds=approx.wall_time,
                ratio=approx.wall_time / analytic.wall_time,
            )
        )
    return rows


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    include_bench: bool = True,
    verbose: bool = True,
) -> ExperimentResult:
    """Fit every configured order, score against the reference, write artifacts.

    Emits surface_control_M_N.csv / surface_state_M_N.csv / trace_M_N.csv per
    order, reference.csv, bench.csv (unless disabled) and report.json.  An
    unconverged fit or reference marks its row and flips the exit status but
    never aborts the sweep.
    """
    out = Path(cfg.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_values = cfg.eval_t_values()
    x0_values = cfg.eval_x0_values()

    result = ExperimentResult(rows=[], references=[], bench=[])

    if cfg.fourier_orders:
        if verbose:
            print(f"solving {x0_values.size} collocation references ...")
        ref_start = time.perf_counter()
        result.references = compute_references(cfg, x0_values, t_values)
        ref_seconds = time.perf_counter() - ref_start
        ref_control, ref_state = reference_surfaces(result.references)
        write_lattice_csv(
            out / "reference.csv",
            t_values,
            x0_values,
            {"u": ref_control.values, "x": ref_state.values},
        )

        for M, N in cfg.fourier_orders:
            if verbose:
                print(f"fitting order M={M} N={N} ...", end=" ", flush=True)
            fit = fit_order(cfg, M, N, trace_path=out / f"trace_{M}_{N}.csv")
            row = evaluate_fit(cfg, fit, ref_control, ref_state)
            result.rows.append(row)
            fit.final_coeffs.save(out / f"coeffs_{M}_{N}.json")
            write_lattice_csv(
                out / f"surface_control_{M}_{N}.csv",
                t_values,
                x0_values,
                {"u": control_surface(fit.final_coeffs, t_values, x0_values).values},
            )
            write_lattice_csv(
                out / f"surface_state_{M}_{N}.csv",
                t_values,
                x0_values,
                {"x": state_surface(fit.final_coeffs, cfg.game(), t_values, x0_values).values},
            )
            if verbose:
                print(
                    f"J={row.objective:.6f} iters={row.iterations} "
                    f"control MAPE={row.control_mape:.2f}% state MAPE={row.state_mape:.2f}%"
                )
    else:
        ref_seconds = 0.0

    if include_bench and cfg.fourier_orders:
        if verbose:
            print("running gradient timing benchmark ...")
        result.bench = timing_benchmark(cfg, cfg.fourier_orders)
        with open(out / "bench.csv", "w") as fh:
            fh.write("M,N,coefficients,iterations,analytic_seconds,fd_seconds,ratio\n")
            for b in result.bench:
                fh.write(
                    f"{b.M},{b.N},{b.coefficients},{b.iterations},"
                    f"{b.analytic_seconds:.6g},{b.fd_seconds:.6g},{b.ratio:.6g}\n"
                )

    report = {
        "config": cfg.to_dict(),
        "domain_length_L": cfg.L,
        "lattice": {
            "t_count": int(t_values.size),
            "x0_count": int(x0_values.size),
            "mape_floor": MAPE_FLOOR,
        },
        "reference": {
            "seconds": ref_seconds,
            "all_converged": all(r.converged for r in result.references),
            "per_x0": [
                {
                    "x0": r.x0,
                    "objective": r.objective,
                    "iterations": r.iterations,
                    "converged": r.converged,
                }
                for r in result.references
            ],
        },
        "rows": [r.to_dict() for r in result.rows],
        "bench": [b.to_dict() for b in result.bench],
        "exit_status": 0,
    }
    report["exit_status"] = result.exit_status
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    result.reports = report
    return result
