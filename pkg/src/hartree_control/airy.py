"""Airy functions, their zeros, and the exact eigenpairs of -d^2/dx^2 + |x|.

Ai is evaluated by its Maclaurin series on [SERIES_MIN, SERIES_MAX] and by the
standard asymptotic expansions outside (exponential for x > 0, oscillatory for
x < 0).  The switch points were chosen so both representations agree to well
below 1e-10 on an overlap window; see ``overlap_discrepancy``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma, pi, sqrt

import numpy as np

from .grid import GridSpec

AIRY_RANGE = 100.0
SERIES_MIN = -7.0
SERIES_MAX = 5.0
SERIES_TERMS = 60
ASYM_TERMS = 24

AI0 = 3.0 ** (-2.0 / 3.0) / gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / gamma(1.0 / 3.0)


class AiryError(ValueError):
    pass


def _asym_coefficients(n: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.empty(n)
    v = np.empty(n)
    u[0] = v[0] = 1.0
    for k in range(1, n):
        u[k] = u[k - 1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        v[k] = -(6 * k + 1) / (6 * k - 1) * u[k]
    return u, v


_U, _V = _asym_coefficients(2 * ASYM_TERMS + 2)


def _series(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Ai = AI0 f + AIP0 g with f'' = x f, g'' = x g, f(0)=1, g'(0)=1
    x3 = x**3
    f = np.zeros_like(x)
    g = np.zeros_like(x)
    fp = np.zeros_like(x)
    gp = np.ones_like(x)
    pf = np.ones_like(x)  # x^{3k}
    a = b = 1.0
    for k in range(SERIES_TERMS):
        if k > 0:
            a /= (3 * k - 1) * (3 * k)
            b /= (3 * k) * (3 * k + 1)
            # d/dx x^{3k} = 3k x^{3k-1};  d/dx x^{3k+1} = (3k+1) x^{3k}
            fp += a * 3 * k * pf * x * x
            pf = pf * x3
            gp += b * (3 * k + 1) * pf
        f += a * pf
        g += b * pf * x
    return AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp


def _optimal_sum(terms: list[np.ndarray]) -> np.ndarray:
    """Sum an asymptotic series, dropping each point's terms once they stop decreasing."""
    total = np.zeros_like(terms[0])
    active = np.ones(terms[0].shape, dtype=bool)
    prev = np.full(terms[0].shape, np.inf)
    for t in terms:
        active &= np.abs(t) < prev
        total += np.where(active, t, 0.0)
        prev = np.where(active, np.abs(t), prev)
    return total


def _asym_positive(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = 2.0 / 3.0 * x**1.5
    su = _optimal_sum([(-1) ** k * _U[k] / z**k for k in range(ASYM_TERMS)])
    sv = _optimal_sum([(-1) ** k * _V[k] / z**k for k in range(ASYM_TERMS)])
    e = np.exp(-z) / (2.0 * sqrt(pi))
    q = x**0.25
    return e / q * su, -e * q * sv


def _asym_negative(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = -x
    z = 2.0 / 3.0 * r**1.5
    n = ASYM_TERMS // 2
    ue = _optimal_sum([(-1) ** k * _U[2 * k] / z ** (2 * k) for k in range(n)])
    uo = _optimal_sum([(-1) ** k * _U[2 * k + 1] / z ** (2 * k + 1) for k in range(n)])
    ve = _optimal_sum([(-1) ** k * _V[2 * k] / z ** (2 * k) for k in range(n)])
    vo = _optimal_sum([(-1) ** k * _V[2 * k + 1] / z ** (2 * k + 1) for k in range(n)])
    c = np.cos(z - pi / 4)
    s = np.sin(z - pi / 4)
    q = r**0.25
    ai = (c * ue + s * uo) / (sqrt(pi) * q)
    aip = q * (s * ve - c * vo) / sqrt(pi)
    return ai, aip


def airy_eval(x):
    """Return (Ai(x), Ai'(x)) for real x with |x| <= AIRY_RANGE.

    Scalars in, scalars out; arrays are evaluated elementwise.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(np.abs(xa) > AIRY_RANGE):
        raise AiryError(f"airy_eval defined for |x| <= {AIRY_RANGE}")
    flat = np.atleast_1d(xa).ravel()
    ai = np.empty_like(flat)
    aip = np.empty_like(flat)
    mid = (flat >= SERIES_MIN) & (flat <= SERIES_MAX)
    pos = flat > SERIES_MAX
    neg = flat < SERIES_MIN
    if mid.any():
        ai[mid], aip[mid] = _series(flat[mid])
    if pos.any():
        ai[pos], aip[pos] = _asym_positive(flat[pos])
    if neg.any():
        ai[neg], aip[neg] = _asym_negative(flat[neg])
    if xa.ndim == 0:
        return float(ai[0]), float(aip[0])
    return ai.reshape(xa.shape), aip.reshape(xa.shape)


def overlap_discrepancy(width: float = 0.5, n: int = 201) -> float:
    """Max |series - asymptotic| over windows of given width around both switch points."""
    worst = 0.0
    for lo, hi, asym in (
        (SERIES_MIN - width, SERIES_MIN, _asym_negative),
        (SERIES_MAX, SERIES_MAX + width, _asym_positive),
    ):
        xs = np.linspace(lo, hi, n)
        s_ai, s_aip = _series(xs)
        a_ai, a_aip = asym(xs)
        worst = max(worst, float(np.max(np.abs(s_ai - a_ai))), float(np.max(np.abs(s_aip - a_aip))))
    return worst


def _zero_seed(kind: str, n: int) -> float:
    # standard large-t expansions for the zeros of Ai and Ai' (returned as positive numbers)
    if kind == "Ai":
        t = 3 * pi * (4 * n + 3) / 8
        return t ** (2 / 3) * (1 + 5 / 48 * t**-2 - 5 / 36 * t**-4)
    t = 3 * pi * (4 * n + 1) / 8
    return t ** (2 / 3) * (1 - 7 / 48 * t**-2 + 35 / 288 * t**-4)


def _zero_fn(kind: str):
    if kind == "Ai":
        def f(r):
            ai, aip = airy_eval(-r)
            return ai, -aip
    elif kind == "Ai'":
        def f(r):
            ai, _ = airy_eval(-r)
            _, aip = airy_eval(-r)
            # d/dr Ai'(-r) = -Ai''(-r) = r Ai(-r)
            return aip, r * ai
    else:
        raise AiryError(f"unknown zero kind {kind!r}")
    return f


@lru_cache(maxsize=None)
def airy_zero(kind: str, n: int, tol: float = 1e-12) -> float:
    """(n+1)-th positive zero of Ai(-x) (kind 'Ai') or Ai'(-x) (kind "Ai'")."""
    if n < 0:
        raise AiryError("zero index must be >= 0")
    f = _zero_fn(kind)
    seed = _zero_seed(kind, n)
    r = seed
    converged = False
    for _ in range(50):
        val, der = f(r)
        if der == 0.0:
            break
        step = val / der
        r_new = r - step
        if not np.isfinite(r_new) or abs(r_new - seed) > 0.5:
            break
        r = r_new
        if abs(step) < tol * max(1.0, r):
            converged = True
            break
    # the spacing between consecutive zeros exceeds 0.5 for every n in range
    half = 0.25 * (_zero_seed(kind, n + 1) - _zero_seed(kind, n))
    lo, hi = (r - 1e-7, r + 1e-7) if converged else (seed - half, seed + half)
    flo, fhi = f(lo)[0], f(hi)[0]
    if flo * fhi > 0:
        if converged:
            lo, hi = seed - half, seed + half
            flo, fhi = f(lo)[0], f(hi)[0]
        if flo * fhi > 0:
            raise AiryError(f"failed to bracket {kind} zero #{n}")
    if not converged:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)[0]
            if fm == 0.0 or hi - lo < tol:
                break
            if flo * fm < 0:
                hi = mid
            else:
                lo, flo = mid, fm
        r = 0.5 * (lo + hi)
    return float(r)


def airy_eigenvalue(N: int) -> float:
    """N-th eigenvalue (0-based) of L+ = -d^2/dx^2 + |x| on the line."""
    return airy_zero("Ai'", N // 2) if N % 2 == 0 else airy_zero("Ai", N // 2)


def airy_eigenvalues(n: int) -> np.ndarray:
    return np.array([airy_eigenvalue(N) for N in range(n)])


@dataclass(frozen=True)
class AiryEigenpair:
    index: int
    eigenvalue: float
    parity: str
    norm_const: float


class UnderResolvedError(ValueError):
    pass


def _raw_mode(N: int, lam: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    arg = np.clip(np.abs(x) - lam, -AIRY_RANGE, AIRY_RANGE)
    ai, aip = airy_eval(arg)
    sgn = np.sign(x)
    if N % 2 == 0:
        return ai, sgn * aip
    return sgn * ai, aip


def eigenpair(N: int, grid: GridSpec) -> tuple[AiryEigenpair, np.ndarray]:
    """Oracle eigenpair of L+ sampled on the grid, unit norm in dx * sum |u|^2."""
    lam = airy_eigenvalue(N)
    if grid.dx > 0.25 / sqrt(lam):
        raise UnderResolvedError(f"dx={grid.dx} does not resolve mode {N} (need <= {0.25 / sqrt(lam):.4g})")
    phi, _ = _raw_mode(N, lam, grid.x)
    c = 1.0 / sqrt(grid.dx * float(np.sum(phi * phi)))
    pair = AiryEigenpair(N, lam, "even" if N % 2 == 0 else "odd", c)
    return pair, c * phi


def mode_and_derivative(pair: AiryEigenpair, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    phi, dphi = _raw_mode(pair.index, pair.eigenvalue, x)
    return pair.norm_const * phi, pair.norm_const * dphi


def radiation_bound_check(N_max: int, omega: tuple[float, float], grid: GridSpec | None = None,
                          n_quad: int = 4001) -> dict:
    """Tabulate lambda_N^{-1/4} int_omega |phi_N'|^2 for N <= N_max.

    Normalization uses ``grid`` (default: dx fine enough for N_max on [-X, X] with
    X = lambda_max + 15); the integral over omega uses a dedicated trapezoid rule.
    Also reports sup_omega |phi_N| / lambda_N^{1/4} and the ratio of
    ||phi_N'||_{L2(omega)} to (2M)^{1/2} lambda_{N/2}^{1/4}.
    """
    a, b = omega
    lam_max = airy_eigenvalue(N_max)
    if grid is None:
        X = max(lam_max + 15.0, abs(a) + 5, abs(b) + 5)
        grid = GridSpec.from_spacing(X, min(0.02, 0.2 / sqrt(lam_max)))
    if a < -grid.half_width or b > grid.half_width or a >= b:
        raise ValueError("omega must be an interval inside the grid box")
    xq = np.linspace(a, b, n_quad)
    M = max(abs(a), abs(b))
    rows = []
    running = 0.0
    for N in range(N_max + 1):
        pair, _ = eigenpair(N, grid)
        phi, dphi = mode_and_derivative(pair, xq)
        integral = float(np.trapezoid(dphi**2, xq))
        value = pair.eigenvalue ** -0.25 * integral
        running = max(running, value)
        half = airy_eigenvalue(N // 2)
        rows.append({
            "N": N,
            "eigenvalue": pair.eigenvalue,
            "value": value,
            "running_max": running,
            "sup_phi_ratio": float(np.max(np.abs(phi))) / pair.eigenvalue**0.25,
            "deriv_bound_ratio": sqrt(integral) / (sqrt(2 * M) * half**0.25),
        })
    return {"rows": rows, "running_max": running}
