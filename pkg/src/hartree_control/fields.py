"""Initial/target data and seeded random test fields."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec
from .spectral import SpectralBasis


def gaussian(grid: GridSpec, center: float = 0.0, width: float = 1.0, momentum: float = 0.0) -> np.ndarray:
    u = np.exp(-((grid.x - center) ** 2) / (2 * width**2) + 1j * momentum * grid.x)
    u[0] = u[-1] = 0.0
    return u


def w1_norm(u: np.ndarray, basis: SpectralBasis) -> float:
    c = basis.project(u)
    return float(np.sqrt(np.sum(basis.eigenvalues * np.abs(c) ** 2)))


def normalize_w1(u: np.ndarray, basis: SpectralBasis, norm: float) -> np.ndarray:
    n = w1_norm(u, basis)
    return u * (norm / n) if n > 0 else u


def random_field(grid: GridSpec, rng: np.random.Generator, scale: float = 1.0, n_bumps: int = 3,
                 reach: float | None = None) -> np.ndarray:
    """Smooth complex field: a few modulated Gaussians placed inside ``reach``."""
    reach = 0.4 * grid.half_width if reach is None else reach
    u = np.zeros(grid.n_points, dtype=complex)
    for _ in range(n_bumps):
        c = rng.uniform(-reach, reach)
        w = rng.uniform(0.4, 1.5)
        k = rng.uniform(-2.0, 2.0)
        a = rng.normal() + 1j * rng.normal()
        u += a * np.exp(-((grid.x - c) ** 2) / (2 * w * w) + 1j * k * grid.x)
    u[0] = u[-1] = 0.0
    return scale * u / max(np.sqrt(grid.dx * np.sum(np.abs(u) ** 2)), 1e-300)


def random_coeffs(n: int, rng: np.random.Generator, decay: float = 1.0) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.arange(1, n + 1) ** decay
