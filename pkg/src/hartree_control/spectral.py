"""Discrete Schrödinger operators, their eigenbases, and the W^k scale.

Fields live on the full grid (including the two Dirichlet end nodes, which are
always zero).  The discrete L2 pairing is <u, v> = dx * sum(conj(u) * v).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .grid import GridSpec, PotentialField, weight_mu

WK_ORDERS = (-3, -2, -1, 0, 1, 2)


class BasisMismatchError(ValueError):
    pass


def inner(u: np.ndarray, v: np.ndarray, dx: float) -> complex:
    return dx * complex(np.vdot(u, v))


def l2_norm(u: np.ndarray, dx: float) -> float:
    return float(np.sqrt(dx * np.vdot(u, u).real))


@dataclass(frozen=True)
class DiscreteOperator:
    """-D^2 (central differences, Dirichlet at +-X) plus a diagonal potential.

    ``diag``/``offdiag`` act on the n_points-2 interior nodes.
    """

    grid: GridSpec
    potential: np.ndarray = field(repr=False)
    name: str = "custom"

    @property
    def diag(self) -> np.ndarray:
        return 2.0 / self.grid.dx**2 + self.potential[1:-1]

    @property
    def offdiag(self) -> np.ndarray:
        return np.full(self.grid.n_points - 3, -1.0 / self.grid.dx**2)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u, dtype=np.result_type(u, float))
        inv = 1.0 / self.grid.dx**2
        out[1:-1] = (2.0 * inv + self.potential[1:-1]) * u[1:-1] - inv * (u[2:] + u[:-2])
        return out

    def solve(self, f: np.ndarray) -> np.ndarray:
        """Solve A u = f with homogeneous Dirichlet data."""
        n = self.grid.n_points - 2
        ab = np.zeros((3, n))
        ab[0, 1:] = self.offdiag
        ab[1] = self.diag
        ab[2, :-1] = self.offdiag
        out = np.zeros_like(f, dtype=np.result_type(f, float))
        out[1:-1] = solve_banded((1, 1), ab, f[1:-1])
        return out

    def norm_estimate(self) -> float:
        return 4.0 / self.grid.dx**2 + float(np.max(np.abs(self.potential)))


def assemble_operator(grid: GridSpec, potential: PotentialField | np.ndarray, name: str | None = None) -> DiscreteOperator:
    if isinstance(potential, PotentialField):
        return DiscreteOperator(grid, np.asarray(potential.values, float), name or potential.kind)
    return DiscreteOperator(grid, np.asarray(potential, float), name or "custom")


def l_plus(grid: GridSpec) -> DiscreteOperator:
    return DiscreteOperator(grid, np.abs(grid.x), "abs_value")


def l_mu(grid: GridSpec) -> DiscreteOperator:
    return DiscreteOperator(grid, weight_mu(grid.x), "weight_mu")


@dataclass(frozen=True)
class SpectralBasis:
    """Lowest eigenpairs of a DiscreteOperator, orthonormal in the discrete L2 pairing.

    ``vectors`` has shape (n_points, n_modes) with zero rows at the two end nodes.
    """

    operator: DiscreteOperator
    eigenvalues: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def grid(self) -> GridSpec:
        return self.operator.grid

    @property
    def dx(self) -> float:
        return self.operator.grid.dx

    def project(self, u: np.ndarray) -> np.ndarray:
        """Coefficients <u, V_k> along the last axis of u (fields are rows)."""
        return self.dx * (np.asarray(u) @ self.vectors)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) @ self.vectors.T

    def multiplication_matrix(self, f: np.ndarray) -> np.ndarray:
        """Galerkin matrix M_jk = <V_j, f V_k>."""
        return self.dx * (self.vectors.T @ (f[:, None] * self.vectors))

    def same_as(self, other: "SpectralBasis") -> bool:
        return self is other or (
            self.eigenvalues.shape == other.eigenvalues.shape
            and self.grid == other.grid
            and np.array_equal(self.eigenvalues, other.eigenvalues)
        )

    def orthogonality_defect(self) -> float:
        G = self.dx * (self.vectors.T @ self.vectors)
        return float(np.max(np.abs(G - np.eye(self.n_modes))))

    def residual(self) -> float:
        """max_k ||A V_k - lambda_k V_k|| / ||A||."""
        worst = 0.0
        for k in range(self.n_modes):
            r = self.operator.matvec(self.vectors[:, k]) - self.eigenvalues[k] * self.vectors[:, k]
            worst = max(worst, l2_norm(r, self.dx))
        return worst / self.operator.norm_estimate()


class DecompositionError(RuntimeError):
    pass


def decompose(op: DiscreteOperator, n_modes: int) -> SpectralBasis:
    n_int = op.grid.n_points - 2
    if not 1 <= n_modes <= n_int:
        raise ValueError(f"n_modes must be in [1, {n_int}]")
    try:
        w, v = eigh_tridiagonal(op.diag, op.offdiag, select="i", select_range=(0, n_modes - 1),
                                lapack_driver="stemr")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DecompositionError(str(exc)) from exc
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    vectors = np.zeros((op.grid.n_points, n_modes))
    vectors[1:-1] = v / np.sqrt(op.grid.dx)
    # fix the sign convention: positive slope/value at the first significant node
    for k in range(n_modes):
        col = vectors[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-3 * np.max(np.abs(col))))
        if col[idx] < 0:
            vectors[:, k] = -col
    basis = SpectralBasis(op, w, vectors)
    defect = basis.orthogonality_defect()
    if defect > 1e-10:
        raise DecompositionError(f"eigenvectors not orthonormal (defect {defect:.2e})")
    return basis


def assemble_and_decompose(grid: GridSpec, potential: PotentialField | np.ndarray, n_modes: int):
    op = assemble_operator(grid, potential)
    return op, decompose(op, n_modes)


@dataclass(frozen=True)
class WkVector:
    """Coefficients in a SpectralBasis tagged with a Sobolev order k."""

    coeffs: np.ndarray
    order: float
    basis: SpectralBasis = field(repr=False)

    @classmethod
    def from_grid(cls, u: np.ndarray, basis: SpectralBasis, order: float = 0) -> "WkVector":
        return cls(basis.project(np.asarray(u, dtype=complex)), order, basis)

    def to_grid(self) -> np.ndarray:
        return self.basis.synthesize(self.coeffs)

    def norm(self, k: float | None = None) -> float:
        k = self.order if k is None else k
        lam = self.basis.eigenvalues
        return float(np.sqrt(np.sum(lam**k * np.abs(self.coeffs) ** 2)))

    def __add__(self, other: "WkVector") -> "WkVector":
        _check_same(self, other)
        return WkVector(self.coeffs + other.coeffs, self.order, self.basis)

    def __sub__(self, other: "WkVector") -> "WkVector":
        _check_same(self, other)
        return WkVector(self.coeffs - other.coeffs, self.order, self.basis)

    def scale(self, c: complex) -> "WkVector":
        return WkVector(c * self.coeffs, self.order, self.basis)


def _check_same(u: WkVector, v: WkVector) -> None:
    if not u.basis.same_as(v.basis):
        raise BasisMismatchError("WkVectors expressed in different bases")


def wk_inner(u: WkVector, v: WkVector, k: float) -> complex:
    _check_same(u, v)
    lam = u.basis.eigenvalues
    return complex(np.sum(lam**k * np.conj(u.coeffs) * v.coeffs))


def wk_norm(u: WkVector, k: float) -> float:
    return u.norm(k)


def apply_power(u: WkVector, s: float) -> WkVector:
    """Multiply coefficients by lambda^s; the order tag drops by 2s.

    s=1 is the Riesz map W^1 -> W^-1 and s=-1 its inverse.
    """
    lam = u.basis.eigenvalues
    return WkVector(lam**s * u.coeffs, u.order - 2 * s, u.basis)


def riesz(u: WkVector) -> WkVector:
    return apply_power(u, 1.0)


def riesz_inverse(u: WkVector) -> WkVector:
    return apply_power(u, -1.0)


def commutator_term(nu: np.ndarray, op: DiscreteOperator, w: np.ndarray) -> np.ndarray:
    """[nu, A] w = nu A w - A (nu w) for the discrete operator A."""
    return nu * op.matvec(w) - op.matvec(nu * w)


def apply_P(w: WkVector, alpha: PotentialField | np.ndarray) -> WkVector:
    """P(w) = L_mu^{-1} [nu, L_mu] w with nu = alpha - mu, evaluated on the grid."""
    if w.order not in (0, 1):
        raise ValueError("apply_P is defined on W^0 and W^1 only")
    grid = w.basis.grid
    a = alpha.values if isinstance(alpha, PotentialField) else np.asarray(alpha, float)
    A = l_mu(grid)
    nu = a - A.potential
    wg = w.to_grid()
    out = A.solve(commutator_term(nu, A, wg))
    return WkVector(w.basis.project(out), w.order, w.basis)


def apply_P_grid(w: np.ndarray, nu: np.ndarray, A: DiscreteOperator) -> np.ndarray:
    return A.solve(commutator_term(nu, A, w))


def forward_diff(u: np.ndarray, dx: float) -> np.ndarray:
    return np.diff(u) / dx


def central_diff(u: np.ndarray, dx: float) -> np.ndarray:
    d = np.zeros_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    return d


def h_norm_direct(u: np.ndarray, mu: np.ndarray, dx: float) -> float:
    """sqrt(||u_x||^2 + ||u||^2_{L2_mu}) with forward differences.

    With forward differences this equals <u, L_mu u> for the discrete L_mu, so
    it is the energy norm conserved by the discrete flow when alpha = mu.
    """
    du = forward_diff(u, dx)
    return float(np.sqrt(dx * (np.sum(np.abs(du) ** 2) + np.sum(mu * np.abs(u) ** 2))))


def operator_norm_between(basis: SpectralBasis, op: DiscreteOperator, k_from: float, k_to: float) -> float:
    """||op||: W^{k_from} -> W^{k_to} measured on the truncated coefficient space."""
    lam = basis.eigenvalues
    G = basis.dx * (basis.vectors.T @ np.column_stack([op.matvec(basis.vectors[:, j]) for j in range(basis.n_modes)]))
    B = (lam[:, None] ** (k_to / 2)) * G * (lam[None, :] ** (-k_from / 2))
    return float(np.linalg.norm(B, 2))
