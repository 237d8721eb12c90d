"""Command-line front end.

Verbs:
    fit        fit a single Fourier order and save the coefficients
    sweep      full experiment: references, order sweep, benchmark, report
    reference  direct-collocation reference surfaces only
    bench      analytic-vs-finite-difference gradient timing only
    check      randomized self-verification of gradients and flows
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .cost import QuadratureRule, TrainingSet, grad_j, j_total
from .descent import DescentDiverged
from .dynamics import FlowContext, GameParams, eval_phi
from .experiment import (
    ExperimentConfig,
    compute_references,
    fit_order,
    map_to_lagrange,
    run_experiment,
    timing_benchmark,
    write_lattice_csv,
    reference_surfaces,
)
from .fourier import CoefficientGrid, eval_u
from .oracles import fd_gradient, integrate_ode


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None) is not None:
        return ExperimentConfig.from_toml(args.config)
    return ExperimentConfig()


def _parse_order(text: str) -> tuple:
    try:
        m, n = text.split(",")
        return int(m), int(n)
    except ValueError:
        raise SystemExit(f"expected --order M,N (got {text!r})")


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    M, N = _parse_order(args.order)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = fit_order(cfg, M, N, trace_path=out / f"trace_{M}_{N}.csv")
    except DescentDiverged as exc:
        print(f"fit diverged after {exc.report.iterations} iterations", file=sys.stderr)
        return 1
    report.final_coeffs.save(out / f"coeffs_{M}_{N}.json")
    status = "converged" if report.converged else "NOT converged"
    print(
        f"order ({M},{N}): J = {report.final_objective:.8f}, "
        f"{report.iterations} iterations, grad norm {report.final_grad_norm:.3e} "
        f"({status}, {report.wall_time:.2f}s)"
    )
    print(f"coefficients -> {out / f'coeffs_{M}_{N}.json'}")
    return 0 if report.converged else 1


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(
        cfg, out_dir=args.out, include_bench=not args.no_bench
    )
    print(f"report -> {Path(args.out or cfg.output_dir) / 'report.json'}")
    return result.exit_status


def cmd_reference(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    refs = compute_references(cfg)
    control, state = reference_surfaces(refs)
    write_lattice_csv(
        out / "reference.csv",
        control.t_values,
        control.x0_values,
        {"u": control.values, "x": state.values},
    )
    bad = [r.x0 for r in refs if not r.converged]
    print(f"{len(refs)} initial conditions -> {out / 'reference.csv'}")
    if bad:
        print(f"unconverged at x0 = {bad}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = timing_benchmark(cfg, cfg.fourier_orders, iterations=args.iterations)
    print(f"{'order':>8} {'coeffs':>7} {'iters':>6} {'analytic':>10} {'fd':>10} {'ratio':>7}")
    for b in rows:
        print(
            f"({b.M},{b.N})".rjust(8)
            + f" {b.coefficients:>7d} {b.iterations:>6d}"
            + f" {b.analytic_seconds:>9.3f}s {b.fd_seconds:>9.3f}s {b.ratio:>7.1f}"
        )
    with open(out / "bench.csv", "w") as fh:
        fh.write("M,N,coefficients,iterations,analytic_seconds,fd_seconds,ratio\n")
        for b in rows:
            fh.write(
                f"{b.M},{b.N},{b.coefficients},{b.iterations},"
                f"{b.analytic_seconds:.6g},{b.fd_seconds:.6g},{b.ratio:.6g}\n"
            )
    return 0


def cmd_check(args) -> int:
    """Spot-check analytic pieces against brute force on random instances."""
    rng = np.random.default_rng(args.seed)
    cfg = _load_config(args)
    game = GameParams(cfg.beta, cfg.xi)
    lagrange = map_to_lagrange(cfg)
    quad = QuadratureRule("simpson", 0.05)
    failures = 0

    for trial in range(args.trials):
        M, N = rng.integers(1, 4, size=2)
        grid = CoefficientGrid(
            rng.uniform(-0.5, 0.5, size=(M + 1, N + 1)), cfg.T, cfg.L
        )
        train = TrainingSet(np.sort(rng.uniform(0.05, 0.95, size=4)))

        g = grad_j(grid, game, lagrange, train, quad)
        fd = fd_gradient(grid, game, lagrange, train, quad, h=1e-6)
        scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1.0)
        grad_err = float(np.max(np.abs(g - fd) / scale))

        x0 = float(rng.uniform(0.1, 0.9))
        ctx = FlowContext(grid, game, x0)
        times = np.linspace(0.0, cfg.T, 81)
        phi = eval_phi(ctx, times)
        traj = integrate_ode(game, lambda t: eval_u(grid, t, x0), x0, 1e-3, cfg.T)
        ode = np.interp(times, traj.times, traj.states)
        flow_err = float(np.max(np.abs(phi - ode)))

        ok = grad_err <= 1e-6 and flow_err <= 1e-5
        failures += not ok
        tag = "ok" if ok else "FAIL"
        print(
            f"trial {trial}: order ({M},{N}) grad rel err {grad_err:.2e}, "
            f"flow sup err {flow_err:.2e} [{tag}]"
        )

    # sanity: zero coefficients must reproduce the uncontrolled logistic decay
    zero = CoefficientGrid.zeros(1, 1, cfg.T, cfg.L)
    train = TrainingSet(np.array([0.5]))
    j_zero = j_total(zero, game, lagrange, train, quad)
    print(f"J at zero control (x0=0.5): {j_zero:.6f}")

    print("all checks passed" if failures == 0 else f"{failures} FAILURES")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ctrlsurf",
        description="Fourier control surfaces for two-strategy game dynamics",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", parents=[common], help="fit one Fourier order")
    p_fit.add_argument("--order", required=True, help="M,N truncation orders")
    p_fit.add_argument("--out", default="results")
    p_fit.set_defaults(func=cmd_fit)

    p_sweep = sub.add_parser("sweep", parents=[common], help="run the full experiment")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--no-bench", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ref = sub.add_parser("reference", parents=[common], help="collocation reference only")
    p_ref.add_argument("--out", default=None)
    p_ref.set_defaults(func=cmd_reference)

    p_bench = sub.add_parser("bench", parents=[common], help="gradient timing benchmark")
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--iterations", type=int, default=300)
    p_bench.set_defaults(func=cmd_bench)

    p_check = sub.add_parser("check", parents=[common], help="randomized self-verification")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--trials", type=int, default=5)
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
