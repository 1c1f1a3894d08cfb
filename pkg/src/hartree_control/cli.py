"""Command-line front end: ``hartree-control <subcommand> [--config ...]``."""

from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, airy
from .config import SUBCOMMANDS, ConfigError, RunConfig, load_config
from .fields import gaussian, normalize_w1
from .grid import GridError, GridSpec, build_cutoff, build_potential, unit_cutoff, weight_mu
from .hartree import KernelSpec
from .hum import ControlNotConverged, LinearControlProblem, SOperator, estimate_observability, solve_control
from .io import atomic_dir, write_csv, write_json, write_trajectory
from .noncontrol import cost_tail_start, discrete_cost_scan, scaling_family_check
from .nonlinear import NonContractionError, NonlinearControlRun, fixed_point_solve
from .propagators import PropagatorSpec, evolve, n_steps_for
from .spectral import assemble_and_decompose, decompose, h_norm_direct, l2_norm, l_plus
from .verify import run_verify

ENV_PREFIX = "HARTREE_CONTROL_"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class NumericalFailure(Exception):
    """Raised after artifacts are written when the run produced failure data."""


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg.grid.X, cfg.grid.n_points)


def _potential(cfg: RunConfig, grid: GridSpec):
    return build_potential(grid, cfg.potential.kind, cfg.potential.slope if cfg.potential.kind == "linear_field" else None)


def _cutoff(cfg: RunConfig, grid: GridSpec):
    if cfg.cutoff.kind == "unit":
        return unit_cutoff(grid)
    return build_cutoff(grid, cfg.cutoff.kind, cfg.cutoff.radius)


def _data(dc, grid, basis, cfg, u0=None, alpha=None):
    if dc.kind == "zero":
        u = np.zeros(grid.n_points, dtype=complex)
    elif dc.kind == "gaussian":
        u = gaussian(grid, dc.center, dc.width, dc.momentum)
    elif dc.kind == "eigenmode":
        if dc.index >= basis.n_modes:
            raise GridError("eigenmode index exceeds n_modes")
        u = basis.vectors[:, dc.index].astype(complex)
    else:  # drift: free evolution of u0 over the horizon
        if u0 is None:
            raise GridError("drift data is only meaningful for uT")
        from .propagators import make_cn
        u = make_cn(grid, alpha, cfg.time.dt).run(u0, n_steps_for(cfg.time.T, cfg.time.dt), store=False)
        return u
    return normalize_w1(u, basis, dc.norm) if dc.norm else u


def _problem(cfg: RunConfig):
    grid = _grid(cfg)
    pot = _potential(cfg, grid)
    _, basis = assemble_and_decompose(grid, pot, cfg.solver.n_modes)
    u0 = _data(cfg.u0, grid, basis, cfg)
    uT = _data(cfg.uT, grid, basis, cfg, u0=u0, alpha=pot)
    return LinearControlProblem(u0, uT, cfg.time.T, _cutoff(cfg, grid), pot, cfg.time.dt, basis,
                                cfg.solver.cg_tol, cfg.solver.cg_max_iter)


def _norm_rows(times, fields, grid):
    mu = weight_mu(grid.x)
    for t, u in zip(times, fields):
        yield [t, l2_norm(u, grid.dx), h_norm_direct(u, mu, grid.dx), float(np.sqrt(grid.dx * np.sum(mu * np.abs(u) ** 2)))]


# ---------------------------------------------------------------------------


def cmd_basis(cfg: RunConfig, out: Path, n: int | None = None) -> dict:
    n = n or cfg.basis.n
    grid = _grid(cfg)
    disc = decompose(l_plus(grid), n)
    rows = []
    for N in range(n):
        try:
            pair, _ = airy.eigenpair(N, grid)
            c = pair.norm_const
        except airy.UnderResolvedError:
            c = float("nan")
        rows.append([N, airy.airy_eigenvalue(N), "even" if N % 2 == 0 else "odd", c, disc.eigenvalues[N]])
    write_csv(out / "basis.csv", ["N", "lambda_N", "parity", "c_N", "lambda_discrete"], rows)
    return {"n": n, "lambda_0": rows[0][1], "max_discrete_error": max(abs(r[1] - r[4]) for r in rows)}


def cmd_evolve(cfg: RunConfig, out: Path) -> dict:
    grid = _grid(cfg)
    pot = _potential(cfg, grid)
    _, basis = assemble_and_decompose(grid, build_potential(grid, "weight_mu"), min(cfg.solver.n_modes, 8))
    u0 = _data(cfg.u0, grid, basis, cfg)
    traj = evolve(u0, cfg.time.T, PropagatorSpec(cfg.evolve.scheme, cfg.time.dt, pot), grid)
    write_trajectory(out / "trajectory.csv", traj.times, grid.x, traj.fields, cfg.output.time_stride,
                     cfg.output.space_stride)
    rows = list(_norm_rows(traj.times, traj.fields, grid))
    write_csv(out / "norms.csv", ["t", "l2", "h", "l2mu"], rows)
    mass = np.array([r[1] for r in rows]) ** 2
    return {"scheme": cfg.evolve.scheme, "steps": len(traj) - 1, "mass_drift": float(np.max(np.abs(mass - mass[0])))}


def cmd_control(cfg: RunConfig, out: Path) -> dict:
    prob = _problem(cfg)
    op = SOperator(prob, cfg.solver.path)
    obs = estimate_observability(op, cfg.solver.n_probe, cfg.seed)
    try:
        sol = solve_control(prob, cfg.solver.path)
    except ControlNotConverged as err:
        write_json(out / "summary.json", {"converged": False, "cg_iterations": err.iterations,
                                          "residual": err.residual, "observability": obs})
        raise NumericalFailure(str(err)) from err
    grid = prob.grid
    write_trajectory(out / "u.csv", sol.u.times, grid.x, sol.u.fields, cfg.output.time_stride, cfg.output.space_stride)
    write_trajectory(out / "h.csv", sol.h.times, grid.x, sol.h.fields, cfg.output.time_stride, cfg.output.space_stride)
    write_csv(out / "norms.csv", ["t", "l2", "h", "l2mu"], _norm_rows(sol.u.times, sol.u.fields, grid))
    write_csv(out / "v0.csv", ["k", "lambda_k", "re", "im"],
              ([k, lam, c.real, c.imag] for k, (lam, c) in enumerate(zip(prob.basis.eigenvalues, sol.v0.coeffs))))
    summary = {"converged": True, "cost": sol.cost, "cg_iterations": sol.cg_iterations, "residual": sol.residual,
               "target_error": sol.target_error, "out_of_span_error": sol.out_of_span_error,
               "observability": obs, "path": op.path}
    write_json(out / "summary.json", summary)
    return summary


def cmd_control_nonlinear(cfg: RunConfig, out: Path) -> dict:
    prob = _problem(cfg)
    kernel = KernelSpec(cfg.kernel.kind, prob.grid)
    run = NonlinearControlRun(prob, kernel, cfg.solver.fp_tol, cfg.solver.fp_max_iter)
    failure = None
    try:
        fixed_point_solve(run)
    except (NonContractionError, ControlNotConverged) as err:
        failure = err
    rows = [[k, d, run.ratios[k - 1] if k > 0 else float("nan")] for k, d in enumerate(run.distances)]
    write_csv(out / "convergence.csv", ["k", "d_k", "r_k"], rows)
    summary = {"converged": run.converged, "iterations": run.iterations, "target_error": run.target_error,
               "verified_target_error": run.verified_target_error, "constants": run.constants}
    if run.u is not None:
        g = prob.grid
        write_trajectory(out / "u.csv", run.u.times, g.x, run.u.fields, cfg.output.time_stride, cfg.output.space_stride)
        write_trajectory(out / "h.csv", run.h.times, g.x, run.h.fields, cfg.output.time_stride, cfg.output.space_stride)
    write_json(out / "summary.json", summary)
    if failure is not None or not run.converged:
        raise NumericalFailure(str(failure) if failure else "fixed point did not converge")
    return summary


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def cmd_noncontrol(cfg: RunConfig, out: Path) -> dict:
    nc = cfg.noncontrol
    grid = _grid(cfg)
    _, basis = assemble_and_decompose(grid, build_potential(grid, "weight_mu"), nc.n_modes)

    def one(job):
        kind, N = job
        return discrete_cost_scan([N], cfg.cutoff.radius, cfg.time.T, kind, dt=cfg.time.dt, cg_tol=cfg.solver.cg_tol,
                                  cg_max_iter=nc.cg_max_iter, n_probe=nc.n_probe, basis=basis, seed=cfg.seed).rows[0]

    jobs = sorted((k, N) for k in nc.kinds for N in sorted(set(nc.N_list)))
    results = _pool_map(one, jobs, cfg.threads)
    header = ["kind", "N", "lambda_N", "cost", "cg_iterations", "converged", "cg_residual", "target_error",
              "observability", "bound_quantity", "proof_term"]
    write_csv(out / "cost_scan.csv", header, ({"kind": k, **r} for (k, _), r in zip(jobs, results)))
    summary = {}
    for kind in nc.kinds:
        rows = [r for (k, _), r in zip(jobs, results) if k == kind]
        costs = [r["cost"] for r in rows]
        summary[kind] = {"cost_ratio_last_first": costs[-1] / costs[0] if costs[0] > 0 else float("inf"),
                         "tail_start_N": rows[cost_tail_start(costs)]["N"],
                         "all_converged": all(r["converged"] for r in rows)}
    write_json(out / "summary.json", summary)
    if not all(r["converged"] for r in results):
        raise NumericalFailure("CG did not converge for some scan points (costs are best iterates)")
    return summary


def cmd_scaling(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scaling

    def one(eps):
        return scaling_family_check([eps], cfg.time.T, sc.dx_factor, sc.box_factor, edge_tol=sc.edge_tol).rows[0]

    eps = sorted(set(sc.eps), reverse=True)
    rows = _pool_map(one, eps, cfg.threads)
    header = list(rows[0].keys())
    write_csv(out / "scaling.csv", header, rows)
    slope = float(np.polyfit(np.log([r["eps"] for r in rows]), np.log([r["deviation"] for r in rows]), 1)[0]) \
        if len(rows) > 1 else float("nan")
    summary = {"slope": slope}
    write_json(out / "summary.json", summary)
    return summary


def cmd_verify(cfg: RunConfig, out: Path) -> dict:
    v = cfg.verify
    checks = run_verify(cfg.seed, v.n_samples, v.X, v.dx, v.dt, v.n_modes)
    write_csv(out / "verify.csv", ["suite", "check", "value", "threshold", "relation", "pass"], checks.rows)
    summary = {"passed": checks.passed, "n_checks": len(checks.rows),
               "failed": [r["check"] for r in checks.rows if not r["pass"]]}
    if not checks.passed:
        raise NumericalFailure(f"failed checks: {summary['failed']}")
    return summary


COMMANDS = {
    "basis": cmd_basis, "evolve": cmd_evolve, "control": cmd_control, "control-nonlinear": cmd_control_nonlinear,
    "noncontrol-scan": cmd_noncontrol, "scaling-scan": cmd_scaling, "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad arguments are invalid input (1); 2 is reserved for numerical failure
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hartree-control", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", help="output directory (default: runs/<subcommand>)")
    p.add_argument("--seed", type=int, help="seed for randomized suites")
    p.add_argument("--threads", type=int, help="worker threads for scans")
    p.add_argument("--n", type=int, help="basis: number of modes to tabulate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    env = os.environ
    config_path = args.config or env.get(ENV_PREFIX + "CONFIG")
    out = Path(args.out or env.get(ENV_PREFIX + "OUT") or Path("runs") / args.subcommand)
    overrides = {"subcommand": args.subcommand}
    for key, flag in (("seed", args.seed), ("threads", args.threads)):
        val = flag if flag is not None else env.get(ENV_PREFIX + key.upper())
        if val is not None:
            try:
                overrides[key] = int(val)
            except ValueError:
                print(f"error: {key} must be an integer", file=sys.stderr)
                return EXIT_INVALID
    try:
        cfg = load_config(config_path, overrides)
        if args.n is not None and args.n <= 0:
            raise ConfigError("--n must be positive")
    except ConfigError as err:
        print(f"error: invalid configuration: {err}", file=sys.stderr)
        return EXIT_INVALID

    start = time.perf_counter()
    status, summary, message = EXIT_OK, {}, ""
    try:
        with atomic_dir(out) as tmp:
            try:
                fn = COMMANDS[cfg.subcommand]
                summary = fn(cfg, tmp, args.n) if cfg.subcommand == "basis" else fn(cfg, tmp)
            except NumericalFailure as err:
                status, message = EXIT_NUMERICAL, str(err)
            write_json(tmp / "manifest.json", {
                "subcommand": cfg.subcommand,
                "config": cfg.model_dump(),
                "versions": {"hartree_control": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                             "python": platform.python_version()},
                "wall_time_s": time.perf_counter() - start,
                "status": "ok" if status == EXIT_OK else "numerical_failure",
                "message": message,
                "summary": summary,
                "artifacts": sorted(p.name for p in tmp.iterdir()),
            })
    except (GridError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    if message:
        print(message, file=sys.stderr)
    print(f"{cfg.subcommand}: {'ok' if status == EXIT_OK else 'numerical failure'} -> {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
