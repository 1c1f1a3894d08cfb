"""Invariant suites run by the ``verify`` subcommand (reduced sizes, seeded)."""

from __future__ import annotations

import numpy as np

from . import airy
from .fields import random_coeffs, random_field
from .grid import GridSpec, build_cutoff, build_potential, weight_mu
from .hartree import m_of, m_of_direct, poisson_split, verify_hartree_bounds
from .hum import (LinearControlProblem, SOperator, estimate_observability, evolve_with_P, multiplier_identity_check,
                  observability_exact, solve_control)
from .noncontrol import avron_identity_check
from .propagators import (FREE_DISPERSIVE_CONSTANT, commutator_residual, group_defect, make_cn, position_mean,
                          semigroup_bounds, avron_herbst_apply, dispersive_ratio)
from .spectral import assemble_and_decompose, decompose, l_plus


class Checks:
    def __init__(self):
        self.rows = []

    def add(self, suite: str, check: str, value: float, threshold: float, relation: str = "<="):
        ok = value <= threshold if relation == "<=" else value >= threshold
        self.rows.append({"suite": suite, "check": check, "value": float(value), "threshold": float(threshold),
                          "relation": relation, "pass": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)


def suite_airy(c: Checks):
    c.add("airy", "series_asymptotic_overlap", airy.overlap_discrepancy(), 1e-9)
    errs = []
    for n in range(6):
        for kind in ("Ai", "Ai'"):
            z = airy.airy_zero(kind, n)
            a, ap = airy.airy_eval(-z)
            errs.append(abs(a if kind == "Ai" else ap))
    c.add("airy", "zero_residual_max", max(errs), 1e-10)
    lam = airy.airy_eigenvalues(201)
    n = np.arange(20, 201)
    slope = np.polyfit(np.log(n), np.log(lam[20:201]), 1)[0]
    c.add("airy", "exponent_deviation", abs(slope - 2 / 3), 0.02)


def suite_spectral(c: Checks, X: float, dx: float):
    g = GridSpec.from_spacing(X, dx)
    basis = decompose(l_plus(g), 6)
    c.add("spectral", "orthogonality_defect", basis.orthogonality_defect(), 1e-10)
    err = max(abs(basis.eigenvalues[k] - airy.airy_eigenvalue(k)) for k in range(6))
    c.add("spectral", "airy_match_N_le_5", err, 5e-3 * (dx / 0.01) ** 2)


def suite_propagators(c: Checks, rng, n_samples: int, X: float, dx: float, dt: float):
    g = GridSpec.from_spacing(X, dx)
    alpha = weight_mu(g.x)
    cn = make_cn(g, alpha, dt)
    u = random_field(g, rng)
    traj = cn.run(u, 200)
    mass = np.sum(np.abs(traj) ** 2, axis=1) * g.dx
    c.add("propagators", "mass_drift_per_step", float(np.max(np.abs(np.diff(mass)))) / mass[0], 1e-12)
    back = cn.run_back(traj[-1], 200, store=False)
    c.add("propagators", "reversal_error", float(np.max(np.abs(back - traj[0]))), 1e-10)
    passes = []
    for _ in range(n_samples):
        phi = random_field(g, rng)
        t = float(rng.uniform(-1.0, 1.0))
        res = semigroup_bounds(phi, t, g, alpha, dt)
        passes.append(all(v["pass"] for v in res.values()))
    c.add("propagators", "evolution_bounds_pass_rate", float(np.mean(passes)), 1.0, ">=")
    ag = GridSpec.from_spacing(60.0, 0.05)
    gauss = np.exp(-ag.x**2 / 2).astype(complex)
    c.add("propagators", "ah_center_shift_error", abs(position_mean(avron_herbst_apply(gauss, 1.0, ag), ag) - 1.0), 1e-4)
    c.add("propagators", "ah_group_defect", group_defect(gauss, 0.7, -1.1, ag), 1e-10)
    c.add("propagators", "ah_commutator_residual", commutator_residual(gauss, 0.5, ag), 1e-6)
    c.add("propagators", "ah_identity_residual", avron_identity_check(0.3, -0.3, [gauss], ag), 1e-6)
    wide = GridSpec.from_spacing(230.0, 0.1)
    g2 = np.exp(-(wide.x + 100) ** 2 / 2).astype(complex)
    ratio = max(dispersive_ratio(g2, t, wide) for t in (1.0, 2.0, 5.0, 10.0))
    c.add("propagators", "dispersive_ratio_max", ratio, FREE_DISPERSIVE_CONSTANT * (1 + 1e-6))


def suite_hartree(c: Checks, rng, n_samples: int, X: float, dx: float):
    g = GridSpec.from_spacing(X, dx)
    k = poisson_split(g)
    phi = random_field(g, rng)
    ref = m_of_direct(phi, k)
    c.add("hartree", "prefix_vs_direct", float(np.max(np.abs(m_of(phi, k) - ref))) / float(np.max(np.abs(ref))), 1e-10)
    pairs = [(random_field(g, rng, rng.uniform(0.1, 2.0)), random_field(g, rng, rng.uniform(0.1, 2.0)))
             for _ in range(n_samples)]
    rep = verify_hartree_bounds(pairs, k)
    c.add("hartree", "linf_bound_pass_rate", rep["linf_pass_rate"], 1.0, ">=")
    c.add("hartree", "lipschitz_pass_rate", rep["lipschitz_pass_rate"], 1.0, ">=")
    c.add("hartree", "lipschitz_max_ratio", rep["max_ratio"], 1.0)


def suite_hum(c: Checks, rng, X: float, dx: float, dt: float, n_modes: int):
    g = GridSpec.from_spacing(X, dx)
    pot = build_potential(g, "weight_mu")
    _, basis = assemble_and_decompose(g, pot, n_modes)
    u0 = random_field(g, rng, 0.1, reach=3.0)
    uT = 0.1 * basis.vectors[:, 0].astype(complex)
    prob = LinearControlProblem(u0, uT, 1.0, build_cutoff(g, "exterior", 2.0), pot, dt, basis)
    op = SOperator(prob)
    a, b = random_coeffs(n_modes, rng), random_coeffs(n_modes, rng)
    Sa, Sb = op.apply(a), op.apply(b)
    scale = np.sqrt(abs(np.vdot(a, Sa)) * abs(np.vdot(b, Sb)))
    c.add("hum", "S_symmetry", abs(np.vdot(a, Sb) - np.conj(np.vdot(b, Sa))) / scale, 1e-9)
    C = observability_exact(op)
    c.add("hum", "observability_positive", C, 0.0, ">=")
    c.add("hum", "lanczos_vs_exact", abs(estimate_observability(op) - C) / C, 1e-6)
    sol = solve_control(prob)
    c.add("hum", "target_error", sol.target_error, 1e-6)
    prob1 = LinearControlProblem(u0, uT, 1.0, np.ones(g.n_points), pot, dt, basis)
    op1 = SOperator(prob1)
    lam = basis.eigenvalues
    c.add("hum", "unit_cutoff_constant", abs(observability_exact(op1) - 1.0 / (1 + lam[-1] ** 2 * dt**2 / 4)), 1e-9)
    alpha = weight_mu(g.x) + 0.5 * np.exp(-g.x**2)
    w = evolve_with_P(random_field(g, rng, reach=2.0), 0.2, dt, g, alpha)
    res = multiplier_identity_check(w, build_cutoff(g, "multiplier_q", 2.0), g, alpha)
    c.add("hum", "multiplier_identity_residual", res["residual"], 10 * (dx**2 + dt**2))


def run_verify(seed: int, n_samples: int = 20, X: float = 15.0, dx: float = 0.05, dt: float = 1e-3,
               n_modes: int = 64) -> Checks:
    rng = np.random.default_rng(seed)
    c = Checks()
    suite_airy(c)
    suite_spectral(c, 30.0, 0.02)
    suite_propagators(c, rng, n_samples, X, dx, dt)
    suite_hartree(c, rng, n_samples, X, dx)
    suite_hum(c, rng, X, dx, dt, n_modes)
    return c
