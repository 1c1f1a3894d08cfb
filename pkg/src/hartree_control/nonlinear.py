"""Local control of the Hartree equation by Picard iteration of the map Gamma."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hartree import KernelSpec, apply_nonlinear
from .hum import LinearControlProblem, solve_control
from .propagators import CrankNicolson, Trajectory
from .spectral import assemble_operator


class NonContractionError(RuntimeError):
    def __init__(self, message: str, run: "NonlinearControlRun"):
        super().__init__(message)
        self.run = run


@dataclass
class NonlinearControlRun:
    problem: LinearControlProblem  # u0, uT, T, psi, alpha, dt, basis, CG settings
    kernel: KernelSpec
    tol: float = 1e-10
    max_iter: int = 30
    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    h: Trajectory | None = None
    u: Trajectory | None = None
    iterations: int = 0
    converged: bool = False
    target_error: float = float("nan")
    verified_target_error: float = float("nan")
    endpoint_error: float = float("nan")
    constants: dict = field(default_factory=dict)


def _cn(problem: LinearControlProblem) -> CrankNicolson:
    return CrankNicolson(assemble_operator(problem.grid, problem.alpha), problem.dt)


def w1_norms(fields: np.ndarray, problem: LinearControlProblem) -> np.ndarray:
    """Truncated W^1 norm of every row."""
    b = problem.basis
    c = b.dx * fields @ b.vectors
    return np.sqrt(np.sum(b.eigenvalues[None, :] * np.abs(c) ** 2, axis=1))


def nonlinear_term(v: Trajectory, problem: LinearControlProblem, kernel: KernelSpec,
                   cn: CrankNicolson | None = None) -> Trajectory:
    """N(v, 0, t) = -i int_0^t U(t - s) m(v(s)) v(s) ds for every node t (CN, trapezoid forcing)."""
    if kernel.kind == "zero":
        return Trajectory(v.times.copy(), np.zeros_like(v.fields))
    cn = cn or _cn(problem)
    forcing = np.array([apply_nonlinear(f, kernel) for f in v.fields])
    return Trajectory(v.times.copy(), cn.run(np.zeros(v.fields.shape[1], complex), len(v) - 1, forcing))


def gamma_map(v: Trajectory, problem: LinearControlProblem, kernel: KernelSpec,
              cn: CrankNicolson | None = None):
    """Gamma(v) = w~ + N(v, 0, .), with w~ the linear controlled path to uT - N(v, 0, T)."""
    N = nonlinear_term(v, problem, kernel, cn)
    sub = LinearControlProblem(problem.u0, problem.uT - N.final, problem.T, problem.psi, problem.alpha,
                               problem.dt, problem.basis, problem.cg_tol, problem.cg_max_iter)
    sol = solve_control(sub)
    return sol.u + N, sol.h, N


def nonlinear_forward(u0: np.ndarray, h: Trajectory, problem: LinearControlProblem, kernel: KernelSpec,
                      sweeps: int = 2) -> Trajectory:
    """Independent forward solver for i u_t = L u + m(u) u + psi h.

    CN with the Hartree term averaged over each step; the implicit end value is
    resolved by ``sweeps`` fixed-point sweeps. The control enters at half steps.
    """
    cn = _cn(problem)
    psi = problem.psi
    u = np.asarray(u0, dtype=complex).copy()
    u[0] = u[-1] = 0.0
    out = np.empty((len(h) + 1, u.size), dtype=complex)
    out[0] = u
    for n in range(len(h)):
        g = psi * h.fields[n]
        f0 = apply_nonlinear(u, kernel) + g
        nxt = cn.step(u, f0, f0)
        for _ in range(sweeps):
            nxt = cn.step(u, f0, apply_nonlinear(nxt, kernel) + g)
        u = nxt
        out[n + 1] = u
    return Trajectory(np.arange(len(h) + 1) * problem.dt, out)


def _target_error(uT_reached: np.ndarray, problem: LinearControlProblem) -> float:
    num, ref = w1_norms(np.stack([uT_reached - problem.uT, problem.uT]), problem)
    return float(num / ref) if ref > 0 else float(num)


def fixed_point_solve(run: NonlinearControlRun) -> NonlinearControlRun:
    problem, kernel = run.problem, run.kernel
    cn = _cn(problem)
    lin = solve_control(problem)
    v = lin.u
    R = float(max(w1_norms(np.stack([problem.u0, problem.uT]), problem)))
    sup_v0 = float(np.max(w1_norms(v.fields, problem)))
    run.constants = {"R": R, "A": sup_v0 / R if R > 0 else 0.0}
    h = lin.h
    b_meas = []
    n_bad = 0
    # large data can blow up before three bad ratios accumulate; that is reported, not warned
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(run.max_iter + 1):
            new, h, N = gamma_map(v, problem, kernel, cn)
            norms_v = w1_norms(v.fields, problem)
            delta = float(np.max(norms_v))
            if delta > 0:
                b_meas.append(float(np.max(w1_norms(N.fields, problem))) / delta**3)
            d = float(np.max(w1_norms(new.fields - v.fields, problem)))
            run.distances.append(d)
            if len(run.distances) > 1:
                r = d / run.distances[-2] if run.distances[-2] > 0 else 0.0
                run.ratios.append(r)
                n_bad = n_bad + 1 if r >= 1 else 0
            v = new
            run.iterations = k + 1
            if d <= run.tol * max(delta, 1e-300) or d == 0.0:
                run.converged = True
                break
            if n_bad >= 3 or not np.isfinite(d):
                run.h, run.u = h, v
                raise NonContractionError(
                    "Gamma is not contracting; reduce the data so that sup_t ||v||_H stays inside the small ball", run)
    run.h, run.u = h, v
    run.constants["B"] = max(b_meas) if b_meas else 0.0
    if run.ratios:
        run.constants["C"] = run.ratios[0] / max(run.constants["A"] * R, 1e-300) ** 2
    run.endpoint_error = _target_error(v.final, problem)
    fwd = nonlinear_forward(problem.u0, h, problem, kernel)
    run.target_error = run.endpoint_error
    run.verified_target_error = _target_error(fwd.final, problem)
    return run
