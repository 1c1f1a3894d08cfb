"""Hilbert uniqueness method for i u_t = L u + psi h.

Time discretization. The adjoint state v and the control h are sampled at
half steps t_{n+1/2}; the Crank–Nicolson steps use midpoint forcing. With
this choice the discrete duality operator

    S = dt * sum_n (B R^n)^* G (B R^n),   G = M_psi Lambda^{-1} M_psi,

is exactly Hermitian and positive semidefinite in the coefficient pairing,
so CG applies without symmetrization error. When the basis diagonalizes L,
R and B are diagonal and S has a closed form (``modal`` path); otherwise S
is applied by streaming CN solves on the grid (``grid`` path).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .grid import CutoffField, GridSpec, PotentialField, weight_mu
from .propagators import CrankNicolson, Trajectory, n_steps_for
from .spectral import SpectralBasis, WkVector, assemble_operator, l2_norm, l_mu


class ControlNotConverged(RuntimeError):
    def __init__(self, message: str, best: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


def _values(f) -> np.ndarray:
    if isinstance(f, (CutoffField, PotentialField)):
        return np.asarray(f.values, dtype=float)
    return np.asarray(f, dtype=float)


@dataclass
class LinearControlProblem:
    u0: np.ndarray
    uT: np.ndarray
    T: float
    psi: np.ndarray
    alpha: np.ndarray
    dt: float
    basis: SpectralBasis
    cg_tol: float = 1e-10
    cg_max_iter: int = 2000

    def __post_init__(self):
        self.psi = _values(self.psi)
        self.alpha = _values(self.alpha)
        n = self.basis.grid.n_points
        self.u0 = np.asarray(self.u0, dtype=complex)
        self.uT = np.asarray(self.uT, dtype=complex)
        for name in ("u0", "uT", "psi", "alpha"):
            a = getattr(self, name)
            if a.shape != (n,):
                raise ValueError(f"{name} is not sampled on the basis grid")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
        if self.T <= 0:
            raise ValueError("T must be positive")
        self.n_steps = n_steps_for(self.T, self.dt)

    @property
    def grid(self) -> GridSpec:
        return self.basis.grid


@dataclass
class ControlSolution:
    v0: WkVector
    h: Trajectory  # sampled at half steps
    u: Trajectory
    cost: float
    cg_iterations: int
    residual: float
    target_error: float
    out_of_span_error: float
    residual_history: list = field(default_factory=list, repr=False)


class SOperator:
    """Duality operator acting on W^{-1} coefficient vectors."""

    def __init__(self, problem: LinearControlProblem, path: str = "auto"):
        self.problem = problem
        basis = problem.basis
        self.basis = basis
        self.lam = basis.eigenvalues
        self.cn = CrankNicolson(assemble_operator(problem.grid, problem.alpha), problem.dt)
        self.M = problem.n_steps
        self.dt = problem.dt
        self.psi = problem.psi
        self.Mpsi = basis.multiplication_matrix(problem.psi)
        self.G = self.Mpsi @ (self.Mpsi / self.lam[:, None])
        diagonal = np.array_equal(problem.alpha, basis.operator.potential)
        if path == "auto":
            path = "modal" if diagonal else "grid"
        if path == "modal" and not diagonal:
            raise ValueError("modal path requires the basis to diagonalize L")
        if path not in ("modal", "grid"):
            raise ValueError(f"unknown path {path!r}")
        self.path = path
        self.n_apply = 0
        self.n_forward = 0
        self.n_backward = 0
        self._matrix = None

    def mode_factors(self):
        h = 0.5j * self.lam * self.dt
        return (1 - h) / (1 + h), 1 / (1 + h)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            r, b = self.mode_factors()
            theta = np.angle(r)
            d = theta[None, :] - theta[:, None]
            M = self.M
            half = np.sin(0.5 * d)
            safe = np.where(d == 0.0, 1.0, half)
            geo = np.where(d == 0.0, float(M), np.exp(0.5j * (M - 1) * d) * np.sin(0.5 * M * d) / safe)
            self._matrix = self.dt * np.conj(b)[:, None] * b[None, :] * geo * self.G
        return self._matrix

    def apply(self, c: np.ndarray) -> np.ndarray:
        self.n_apply += 1
        if self.path == "modal":
            return self.matrix() @ c
        return self._apply_grid(c)

    def _apply_grid(self, c: np.ndarray) -> np.ndarray:
        basis, cn, psi, lam = self.basis, self.cn, self.psi, self.lam
        v_next = cn.run(basis.synthesize(np.asarray(c, dtype=complex)), self.M, store=False)
        self.n_forward += 1
        w = np.zeros_like(v_next)
        for _ in range(self.M):
            v = cn.step_back(v_next)
            f = psi * basis.synthesize(basis.project(psi * 0.5 * (v + v_next)) / lam)
            w = cn.step_back(w, f, f)
            v_next = v
        self.n_backward += 1
        return -1j * basis.project(w)

    @staticmethod
    def pairing(a: np.ndarray, b: np.ndarray) -> complex:
        """<a, b> between W^{-1} and W^1 coefficient vectors."""
        return complex(np.vdot(a, b))


def adjoint_solve(v0: WkVector, T: float, dt: float, alpha=None) -> Trajectory:
    """Grid trajectory of i v_t = L v from v0 (CN; the adjoint flow is the same equation)."""
    basis = v0.basis
    a = basis.operator.potential if alpha is None else _values(alpha)
    n = n_steps_for(T, dt)
    cn = CrankNicolson(assemble_operator(basis.grid, a), dt)
    return Trajectory(np.arange(n + 1) * dt, cn.run(v0.to_grid().astype(complex), n))


def control_from_adjoint(v: Trajectory, psi, basis: SpectralBasis) -> Trajectory:
    """h = Lambda^{-1} P(psi v) per time node."""
    p = _values(psi)
    coeffs = (basis.dx * (p[None, :] * v.fields)) @ basis.vectors / basis.eigenvalues[None, :]
    return Trajectory(v.times.copy(), coeffs @ basis.vectors.T)


def apply_S(op: SOperator, v0: WkVector) -> WkVector:
    return WkVector(op.apply(v0.coeffs), 1, v0.basis)


def cg_w_minus1(apply, rhs: np.ndarray, lam: np.ndarray, tol: float, max_iter: int, ref: float | None = None):
    """CG for K x = Lambda rhs, K = Lambda S, in the W^{-1} inner product.

    The W^{-1} norm of the K-residual equals the W^1 norm of rhs - S x.
    Residuals are reported relative to ``ref`` (default ||rhs||_{W^1}); a
    right-hand side already below tol * ref returns x = 0.
    """
    x = np.zeros_like(rhs, dtype=complex)
    r = lam * rhs
    rr = float(np.real(np.vdot(r, r / lam)))
    rr0 = max(rr, ref * ref) if ref is not None else rr
    history = [float(np.sqrt(rr / rr0)) if rr0 > 0 else 0.0]
    if rr0 == 0.0 or history[0] <= tol:
        return x, 0, history
    p = r.copy()
    best, best_res = x.copy(), history[0]
    for k in range(1, max_iter + 1):
        Sp = apply(p)
        pKp = float(np.real(np.vdot(p, Sp)))
        if pKp <= 0:
            raise ControlNotConverged("S is not positive on the search direction", best, best_res, k)
        a = rr / pKp
        x = x + a * p
        r = r - a * lam * Sp
        rr_new = float(np.real(np.vdot(r, r / lam)))
        res = float(np.sqrt(rr_new / rr0))
        history.append(res)
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= tol:
            return x, k, history
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ControlNotConverged(f"CG did not reach {tol:g} in {max_iter} iterations", best, best_res, max_iter)


def _w1(c: np.ndarray, lam: np.ndarray) -> float:
    return float(np.sqrt(np.sum(lam * np.abs(c) ** 2)))


def reconstruct(problem: LinearControlProblem, v0: np.ndarray, op: SOperator | None = None):
    """Control h at half steps and the controlled forward trajectory from an adjoint datum."""
    basis = problem.basis
    cn = op.cn if op is not None else CrankNicolson(assemble_operator(problem.grid, problem.alpha), problem.dt)
    M, dt, psi, lam = problem.n_steps, problem.dt, problem.psi, basis.eigenvalues
    x = np.asarray(v0, dtype=complex)
    if op is not None and op.path == "modal":
        r, b = op.mode_factors()
        phase = np.exp(1j * np.arange(M)[:, None] * np.angle(r)[None, :])
        hc = (phase * (b * x)[None, :]) @ op.Mpsi / lam[None, :]
    else:
        vmid = np.empty((M, problem.grid.n_points), dtype=complex)
        v = basis.synthesize(x)
        for k in range(M):
            v_next = cn.step(v)
            vmid[k] = 0.5 * (v + v_next)
            v = v_next
        hc = basis.dx * (vmid * psi[None, :]) @ basis.vectors / lam[None, :]
        del vmid
    h = hc @ basis.vectors.T
    u = cn.run_midpoint(problem.u0, psi[None, :] * h)
    cost = float(np.sqrt(dt * np.sum(lam[None, :] * np.abs(hc) ** 2)))
    times = np.arange(M + 1) * dt
    return Trajectory((np.arange(M) + 0.5) * dt, h), Trajectory(times, u), cost


def target_errors(problem: LinearControlProblem, uT_reached: np.ndarray) -> tuple[float, float]:
    basis, lam = problem.basis, problem.basis.eigenvalues
    e = uT_reached - problem.uT
    ec = basis.project(e)
    ref = _w1(basis.project(problem.uT), lam) or 1.0
    ref_l2 = l2_norm(problem.uT, basis.dx) or 1.0
    return _w1(ec, lam) / ref, l2_norm(e - basis.synthesize(ec), basis.dx) / ref_l2


def hum_rhs(problem: LinearControlProblem, op: SOperator) -> np.ndarray:
    w1_0 = op.cn.run_back(problem.uT, problem.n_steps, store=False)
    return problem.basis.project(-1j * problem.u0 + 1j * w1_0)


def solve_control(problem: LinearControlProblem, path: str = "auto") -> ControlSolution:
    op = SOperator(problem, path)
    rhs = hum_rhs(problem, op)
    lam, basis = op.lam, problem.basis
    ref = max(_w1(rhs, lam), _w1(basis.project(problem.u0), lam), _w1(basis.project(problem.uT), lam))
    x, its, hist = cg_w_minus1(op.apply, rhs, lam, problem.cg_tol, problem.cg_max_iter, ref)
    h, u, cost = reconstruct(problem, x, op)
    err, oos = target_errors(problem, u.final)
    return ControlSolution(
        v0=WkVector(x, -1, problem.basis), h=h, u=u, cost=cost, cg_iterations=its,
        residual=hist[-1], target_error=err, out_of_span_error=oos, residual_history=hist,
    )


def lanczos_extremes(apply, n: int, n_probe: int, seed: int = 0) -> np.ndarray:
    """Ritz values of a Hermitian operator (Euclidean), full reorthogonalization."""
    rng = np.random.default_rng(seed)
    k_max = min(n_probe, n)
    Q = np.zeros((n, k_max), dtype=complex)
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q /= np.linalg.norm(q)
    alphas, betas = [], []
    for j in range(k_max):
        Q[:, j] = q
        z = apply(q)
        a = float(np.real(np.vdot(q, z)))
        z = z - Q[:, : j + 1] @ (Q[:, : j + 1].conj().T @ z)
        z = z - Q[:, : j + 1] @ (Q[:, : j + 1].conj().T @ z)
        alphas.append(a)
        b = float(np.linalg.norm(z))
        if j == k_max - 1 or b <= 1e-14 * max(abs(a), 1e-300):
            break
        betas.append(b)
        q = z / b
    if len(alphas) == 1:
        return np.array(alphas)
    return eigh_tridiagonal(np.array(alphas), np.array(betas[: len(alphas) - 1]), eigvals_only=True)


def estimate_observability(op: SOperator, n_probe: int | None = None, seed: int = 0) -> float:
    """Smallest Rayleigh quotient <v0, S v0> / ||v0||^2_{W^{-1}}."""
    s = np.sqrt(op.lam)
    n_probe = op.basis.n_modes if n_probe is None else n_probe
    ritz = lanczos_extremes(lambda y: s * op.apply(s * y), op.basis.n_modes, n_probe, seed)
    return float(ritz[0])


def observability_exact(op: SOperator) -> float:
    s = np.sqrt(op.lam)
    K = s[:, None] * op.matrix() * s[None, :]
    return float(np.linalg.eigvalsh(0.5 * (K + K.conj().T))[0])


def weak_observability_ratio(op: SOperator, v0: np.ndarray) -> float:
    """||v0||^2_{W^-1} / (int ||psi v||^2_{W^-1} dt + ||v0||^2_{W^-2})."""
    lam = op.lam
    num = float(np.sum(np.abs(v0) ** 2 / lam))
    obs = float(np.real(np.vdot(v0, op.apply(v0))))
    return num / (obs + float(np.sum(np.abs(v0) ** 2 / lam**2)))


# ---------------------------------------------------------------------------
# multiplier identity


def evolve_with_P(w0: np.ndarray, T: float, dt: float, grid: GridSpec, alpha,
                  tol: float = 1e-13, max_inner: int = 50) -> Trajectory:
    """CN for i w_t = L w + P(w), P = L_mu^{-1}[nu, L_mu]; P(w^{n+1}) resolved by fixed point."""
    a = _values(alpha)
    A = l_mu(grid)
    nu = a - A.potential
    cn = CrankNicolson(assemble_operator(grid, a), dt)

    def P(w):
        return A.solve(nu * A.matvec(w) - A.matvec(nu * w))

    n = n_steps_for(T, dt)
    out = np.empty((n + 1, grid.n_points), dtype=complex)
    w = np.asarray(w0, dtype=complex).copy()
    w[0] = w[-1] = 0.0
    out[0] = w
    for k in range(n):
        p0 = P(w)
        nxt = cn.step(w, p0, p0)
        for _ in range(max_inner):
            cand = cn.step(w, p0, P(nxt))
            done = np.max(np.abs(cand - nxt)) <= tol * max(np.max(np.abs(cand)), 1.0)
            nxt = cand
            if done:
                break
        w = nxt
        out[k + 1] = w
    return Trajectory(np.arange(n + 1) * dt, out)


def _cdiff(u: np.ndarray, dx: float) -> np.ndarray:
    d = np.zeros_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    return d


def multiplier_identity_check(w: Trajectory, q, grid: GridSpec, alpha) -> dict:
    """Both sides of the integrated multiplier identity with multiplier q.

    0 = 1/2 Im int q w conj(w_x) |_0^T
        + int_0^T Re int [q_x |w_x|^2 + 1/2 q_xx w conj(w_x) + F (q conj(w_x) + 1/2 q_x conj(w))]
    with F = alpha w + P(w).
    """
    qv = _values(q)
    a = _values(alpha)
    dx = grid.dx
    qx = _cdiff(qv, dx)
    qxx = _cdiff(qx, dx)
    A = l_mu(grid)
    nu = a - A.potential
    if not np.any(w.fields):
        return {"boundary": 0.0, "bulk": 0.0, "residual": 0.0, "scale": 0.0}

    def bnd(u):
        return 0.5 * float(np.imag(np.sum(qv * u * np.conj(_cdiff(u, dx)))) * dx)

    dens = np.empty(len(w))
    mag = np.empty(len(w))
    for j, u in enumerate(w.fields):
        ux = _cdiff(u, dx)
        F = a * u + A.solve(nu * A.matvec(u) - A.matvec(nu * u))
        terms = [qx * np.abs(ux) ** 2, 0.5 * qxx * u * np.conj(ux), F * (qv * np.conj(ux) + 0.5 * qx * np.conj(u))]
        vals = [float(np.real(np.sum(t)) * dx) for t in terms]
        dens[j] = sum(vals)
        mag[j] = sum(abs(v) for v in vals)
    b1, b0 = bnd(w.fields[-1]), bnd(w.fields[0])
    bulk = float(np.trapezoid(dens, w.times))
    scale = abs(b1) + abs(b0) + float(np.trapezoid(mag, w.times))
    total = b1 - b0 + bulk
    return {"boundary": b1 - b0, "bulk": bulk, "residual": abs(total) / scale if scale > 0 else 0.0,
            "scale": scale}
