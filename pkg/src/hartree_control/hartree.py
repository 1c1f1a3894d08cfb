"""Nonlocal Hartree term m(phi)(x) = int rho(x, y) |phi(y)|^2 dy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, weight_mu
from .spectral import h_norm_direct

KERNEL_KINDS = ("poisson_split", "zero", "custom_matrix")


class KernelError(ValueError):
    pass


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = np.full(grid.n_points, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return w


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    grid: GridSpec
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "custom_matrix":
            n = self.grid.n_points
            if self.matrix is None or np.shape(self.matrix) != (n, n):
                raise KernelError(f"custom kernel matrix must have shape ({n}, {n})")
            if not np.isrealobj(self.matrix):
                raise KernelError("custom kernel must be real")
        if self.kind == "poisson_split":
            bound, slope = kernel_bound_defect(self.grid)
            if bound > 0 or slope > 2.0 + 1e-12:
                raise KernelError("split kernel violates |rho| <= mu(y) or |rho_x| <= 2 on this grid")

    def dense(self) -> np.ndarray:
        x = self.grid.x
        if self.kind == "zero":
            return np.zeros((x.size, x.size))
        if self.kind == "custom_matrix":
            return np.asarray(self.matrix, dtype=float)
        return np.abs(x[:, None] - x[None, :]) - weight_mu(x)[:, None]


def poisson_split(grid: GridSpec) -> KernelSpec:
    return KernelSpec("poisson_split", grid)


def kernel_bound_defect(grid: GridSpec, block: int = 1024) -> tuple[float, float]:
    """(max over pairs of |rho| - mu(y), max discrete |d rho / dx|), exhaustive, blockwise."""
    x = grid.x
    mu = weight_mu(x)
    worst = -np.inf
    for s in range(0, x.size, block):
        xs = x[s:s + block, None]
        rho = np.abs(xs - x[None, :]) - mu[s:s + block, None]
        worst = max(worst, float(np.max(np.abs(rho) - mu[None, :])))
    # d/dx of |x - y| has modulus 1 and |mu'| <= 1, so the difference quotient is bounded by
    # |diff|x-y|| + |diff mu| per cell; the first term is at most dx per cell.
    slope = 1.0 + float(np.max(np.abs(np.diff(mu)))) / grid.dx
    return max(worst, 0.0) if worst > 1e-13 else 0.0, slope


def m_of(phi: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    grid = kernel.grid
    phi = np.asarray(phi)
    if phi.shape != (grid.n_points,):
        raise KernelError("field is not on the kernel grid")
    g = trapezoid_weights(grid) * np.abs(phi) ** 2
    if kernel.kind == "zero":
        return np.zeros(grid.n_points)
    if kernel.kind == "custom_matrix":
        return kernel.dense() @ g
    x = grid.x
    yg = x * g
    c0 = np.cumsum(g)
    c1 = np.cumsum(yg)
    tot0, tot1 = c0[-1], c1[-1]
    # left part sums y_j <= x_i (the j = i term contributes zero either way)
    left = x * c0 - c1
    right = (tot1 - c1) - x * (tot0 - c0)
    return left + right - weight_mu(x) * tot0


def m_of_direct(phi: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """O(n^2) reference quadrature."""
    g = trapezoid_weights(kernel.grid) * np.abs(phi) ** 2
    return kernel.dense() @ g


def apply_nonlinear(phi: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    return m_of(phi, kernel) * phi


def l2mu_sq(phi: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(trapezoid_weights(grid) * weight_mu(grid.x) * np.abs(phi) ** 2))


def verify_hartree_bounds(pairs, kernel: KernelSpec) -> dict:
    """Evaluate the L-infinity bound and the cubic Lipschitz bound (constant 3/2) per pair."""
    grid = kernel.grid
    mu = weight_mu(grid.x)
    rows = []
    for phi, phi1 in pairs:
        m = m_of(phi, kernel)
        a = h_norm_direct(phi, mu, grid.dx)
        b = h_norm_direct(phi1, mu, grid.dx)
        lhs = h_norm_direct(m * phi - apply_nonlinear(phi1, kernel), mu, grid.dx)
        rhs = 1.5 * (a * a + a * b + b * b) * h_norm_direct(phi - phi1, mu, grid.dx)
        linf, l2mu = float(np.max(np.abs(m))), l2mu_sq(phi, grid)
        rows.append({
            "lipschitz_lhs": lhs,
            "lipschitz_rhs": rhs,
            "ratio": lhs / rhs if rhs > 0 else 0.0,
            "lipschitz_pass": bool(lhs <= rhs * (1 + 1e-12) + 1e-300),
            "linf_ratio": linf / l2mu if l2mu > 0 else 0.0,
            "linf_pass": bool(linf <= l2mu * (1 + 1e-12)),
        })
    n = max(len(rows), 1)
    return {
        "rows": rows,
        "lipschitz_pass_rate": sum(r["lipschitz_pass"] for r in rows) / n,
        "linf_pass_rate": sum(r["linf_pass"] for r in rows) / n,
        "max_ratio": max((r["ratio"] for r in rows), default=0.0),
        "max_linf_ratio": max((r["linf_ratio"] for r in rows), default=0.0),
    }
