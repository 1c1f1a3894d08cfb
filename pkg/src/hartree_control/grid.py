"""Spatial grid, weight function, cutoffs and potentials."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MIN_POINTS = 31
# custom potentials must have bounded discrete derivatives
CUSTOM_DERIV_LIMIT = 1.0e2


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-X, X] with an odd number of nodes (so x=0 is a node)."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise GridError("half_width must be positive")
        if self.n_points < MIN_POINTS or self.n_points % 2 == 0:
            raise GridError(f"n_points must be odd and >= {MIN_POINTS}, got {self.n_points}")

    @classmethod
    def from_spacing(cls, half_width: float, dx: float) -> "GridSpec":
        n = int(round(2 * half_width / dx)) + 1
        if n % 2 == 0:
            n += 1
        return cls(half_width, n)

    @property
    def dx(self) -> float:
        return 2 * self.half_width / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.half_width, self.half_width, self.n_points)
        x[self.n_points // 2] = 0.0
        return x

    @property
    def center(self) -> int:
        return self.n_points // 2

    def require_box(self, radius: float, margin: float = 4.0) -> None:
        if self.half_width < radius + margin:
            raise GridError(
                f"box half-width {self.half_width} too small for radius {radius} (need >= {radius + margin})"
            )


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep 10t^3 - 15t^4 + 6t^5 on [0, 1], clamped outside."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


_BRIDGE = np.array([1.0, 3.0 / 16.0, 1.0 / 32.0, -1.0 / 256.0])  # coefficients of x^0, x^2, x^4, x^6


def weight_mu(x: np.ndarray) -> np.ndarray:
    """mu(x) = |x| for |x| >= 2, C^2 even polynomial bridge inside."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    x2 = x * x
    bridge = _BRIDGE[0] + x2 * (_BRIDGE[1] + x2 * (_BRIDGE[2] + x2 * _BRIDGE[3]))
    return np.where(ax >= 2.0, ax, bridge)


def weight_mu_dx(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x2 = x * x
    bridge = x * (2 * _BRIDGE[1] + x2 * (4 * _BRIDGE[2] + 6 * _BRIDGE[3] * x2))
    return np.where(np.abs(x) >= 2.0, np.sign(x), bridge)


def weight_mu_dxx(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x2 = x * x
    bridge = 2 * _BRIDGE[1] + x2 * (12 * _BRIDGE[2] + 30 * _BRIDGE[3] * x2)
    return np.where(np.abs(x) >= 2.0, 0.0, bridge)


def build_weight_mu(grid: GridSpec) -> np.ndarray:
    return weight_mu(grid.x)


@dataclass(frozen=True)
class CutoffField:
    kind: str
    radius: float
    values: np.ndarray = field(repr=False)


CUTOFF_KINDS = ("exterior", "interior", "multiplier_q")


def cutoff_values(x: np.ndarray, kind: str, R: float) -> np.ndarray:
    ax = np.abs(x)
    if kind == "exterior":
        # 0 on |x| <= R, 1 on |x| >= R+1
        v = smoothstep(ax - R)
        return np.where(ax <= R, 0.0, np.where(ax >= R + 1, 1.0, v))
    if kind == "interior":
        # 1 on |x| <= R+1, 0 on |x| >= R+2
        v = 1.0 - smoothstep(ax - R - 1)
        return np.where(ax <= R + 1, 1.0, np.where(ax >= R + 2, 0.0, v))
    if kind == "multiplier_q":
        # x on |x| <= R+2, 0 on |x| >= R+3
        v = x * (1.0 - smoothstep(ax - R - 2))
        return np.where(ax <= R + 2, x, np.where(ax >= R + 3, 0.0, v))
    raise GridError(f"unknown cutoff kind {kind!r}")


def build_cutoff(grid: GridSpec, kind: str, R: float) -> CutoffField:
    if R <= 0:
        raise GridError("cutoff radius must be positive")
    if kind not in CUTOFF_KINDS:
        raise GridError(f"unknown cutoff kind {kind!r}")
    grid.require_box(R)
    return CutoffField(kind, float(R), cutoff_values(grid.x, kind, R))


def unit_cutoff(grid: GridSpec) -> CutoffField:
    """psi == 1: the degenerate cutoff covering the whole box."""
    return CutoffField("unit", float("inf"), np.ones(grid.n_points))


@dataclass(frozen=True)
class PotentialField:
    kind: str
    values: np.ndarray = field(repr=False)
    slope_plus: float
    slope_minus: float
    slope: float | None = None

    @property
    def dx_sup(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))))


POTENTIAL_KINDS = ("weight_mu", "linear_field", "abs_value", "custom")


def build_potential(
    grid: GridSpec,
    kind: str = "weight_mu",
    slope: float | None = None,
    func: Callable[[np.ndarray], np.ndarray] | None = None,
    values: np.ndarray | None = None,
) -> PotentialField:
    x = grid.x
    if kind == "weight_mu":
        alpha = weight_mu(x)
    elif kind == "linear_field":
        if slope is None:
            raise GridError("linear_field potential needs a slope")
        alpha = float(slope) * x
    elif kind == "abs_value":
        alpha = np.abs(x)
    elif kind == "custom":
        if values is not None:
            alpha = np.asarray(values, dtype=float)
        elif func is not None:
            alpha = np.asarray(func(x), dtype=float)
        else:
            raise GridError("custom potential needs func or values")
        if alpha.shape != x.shape or not np.all(np.isfinite(alpha)):
            raise GridError("custom potential must be finite and match the grid")
        dx = grid.dx
        d1 = np.diff(alpha) / dx
        d2 = np.diff(alpha, 2) / dx**2
        if np.max(np.abs(d1)) > CUSTOM_DERIV_LIMIT or np.max(np.abs(d2)) > CUSTOM_DERIV_LIMIT:
            raise GridError("custom potential has unbounded discrete first/second derivative")
    else:
        raise GridError(f"unknown potential kind {kind!r}")
    mu = weight_mu(x)
    return PotentialField(
        kind,
        alpha,
        slope_plus=float(alpha[-1] / mu[-1]),
        slope_minus=float(alpha[0] / mu[0]),
        slope=None if slope is None else float(slope),
    )
