"""Acceptance criteria 1-12, each at its stated tolerance.

Every test prints one PASS/FAIL line (collected again in the terminal summary).
A criterion the method cannot meet is still asserted as stated and marked
``xfail(strict=True)``: the FAIL is reported, and an unexpected pass breaks the run.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from hartree_control import airy
from hartree_control.fields import gaussian, normalize_w1, random_field
from hartree_control.grid import GridSpec, build_cutoff, build_potential, weight_mu
from hartree_control.hartree import KernelSpec, m_of, m_of_direct, poisson_split, verify_hartree_bounds
from hartree_control.hum import (LinearControlProblem, SOperator, estimate_observability, observability_exact,
                                 solve_control)
from hartree_control.noncontrol import avron_identity_check, discrete_cost_scan, scaling_family_check
from hartree_control.nonlinear import NonlinearControlRun, fixed_point_solve
from hartree_control.propagators import (FREE_DISPERSIVE_CONSTANT, avron_herbst_apply, commutator_residual,
                                         dispersive_ratio, make_cn, position_mean, semigroup_bounds)
from hartree_control.spectral import assemble_and_decompose, decompose, l_plus


def test_criterion_01_airy_spectral_match(report):
    lam = airy.airy_eigenvalues(11)
    errs = {}
    for dx in (0.02, 0.01):
        disc = decompose(l_plus(GridSpec.from_spacing(30.0, dx)), 11).eigenvalues
        errs[dx] = float(np.max(np.abs(disc - lam)))
    drop = errs[0.02] / errs[0.01]
    ok = errs[0.01] <= 5e-3 and drop >= 3
    report(1, ok, f"max|err| N<=10 at dx=0.01: {errs[0.01]:.2e} (tol 5e-3); drop on halving dx: x{drop:.2f} (>= 3)")
    assert ok


def test_criterion_02_eigenvalue_exponent(report):
    n = np.arange(20, 201)
    lam = airy.airy_eigenvalues(201)[20:]
    slope = np.polyfit(np.log(n), np.log(lam), 1)[0]
    ok = abs(slope - 2 / 3) <= 0.02
    report(2, ok, f"fitted exponent {slope:.4f} (2/3 +- 0.02)")
    assert ok


def test_criterion_03_radiation_bound(report):
    res = airy.radiation_bound_check(50, (-5.0, 5.0))
    vals = np.array([r["value"] for r in res["rows"]])
    running = np.maximum.accumulate(vals)
    # bounded: the running max settles, the second half adds less than 10% to it
    tail_growth = running[-1] / running[25] - 1
    ok = np.isfinite(running[-1]) and tail_growth <= 0.1
    report(3, ok, f"running max {running[-1]:.4f}; growth over N in [25,50]: {tail_growth:.2%}")
    assert ok


def test_criterion_04_unitarity_and_bounds(report):
    g = GridSpec.from_spacing(15.0, 0.05)
    alpha = weight_mu(g.x)
    dt = 1e-3
    rng = np.random.default_rng(4)
    u = random_field(g, rng)
    traj = make_cn(g, alpha, dt).run(u, 10_000)
    mass = np.sum(np.abs(traj) ** 2, axis=1) * g.dx
    per_step = float(np.max(np.abs(np.diff(mass)))) / mass[0]
    total = float(abs(mass[-1] - mass[0])) / mass[0]
    passes = 0
    for _ in range(100):
        phi = random_field(g, rng, rng.uniform(0.1, 2.0))
        t = float(rng.uniform(-1.0, 1.0))
        passes += all(v["pass"] for v in semigroup_bounds(phi, t, g, alpha, dt).values())
    ok = per_step <= 1e-12 and total <= 1e-9 and passes == 100
    report(4, ok, f"mass drift/step {per_step:.1e}, over 1e4 steps {total:.1e}; evolution bounds {passes}/100")
    assert ok


def test_criterion_05_avron_herbst(report):
    g = GridSpec.from_spacing(60.0, 0.05)
    gauss = np.exp(-g.x**2 / 2).astype(complex)
    shift = abs(position_mean(avron_herbst_apply(gauss, 1.0, g), g) - 1.0)
    wide = GridSpec.from_spacing(230.0, 0.05)
    g2 = np.exp(-(wide.x + 100) ** 2 / 2).astype(complex)
    ratio = max(dispersive_ratio(g2, t, wide) for t in np.linspace(1.0, 10.0, 10))
    comm = commutator_residual(gauss, 0.5, g)
    ident = max(avron_identity_check(r, s, [gauss], g) for r, s in ((0.3, -0.3), (0.5, 0.5)))
    ok = shift <= 1e-4 and ratio <= 0.29 and comm <= 1e-6 and ident <= 1e-6
    report(5, ok, f"center error {shift:.1e}; dispersive max {ratio:.4f} (free constant "
                  f"{FREE_DISPERSIVE_CONSTANT:.4f}); commutator {comm:.1e}; conjugation identity {ident:.1e}")
    assert ok


def test_criterion_06_hartree_estimates(report):
    g = GridSpec.from_spacing(15.0, 0.05)
    k = poisson_split(g)
    rng = np.random.default_rng(6)
    pairs = [(random_field(g, rng, rng.uniform(0.1, 2.0)), random_field(g, rng, rng.uniform(0.1, 2.0)))
             for _ in range(100)]
    rep = verify_hartree_bounds(pairs, k)
    phi = pairs[0][0]
    ref = m_of_direct(phi, k)
    err = float(np.max(np.abs(m_of(phi, k) - ref))) / float(np.max(np.abs(ref)))
    ok = rep["linf_pass_rate"] == 1.0 and rep["lipschitz_pass_rate"] == 1.0 and err <= 1e-10
    report(6, ok, f"L-inf bound {rep['linf_pass_rate']:.0%}, Lipschitz bound {rep['lipschitz_pass_rate']:.0%} "
                  f"(max ratio {rep['max_ratio']:.3f}); prefix vs direct {err:.1e}")
    assert ok


def test_criterion_07_linear_hum(report):
    t0 = time.perf_counter()
    g = GridSpec.from_spacing(30.0, 0.02)
    pot = build_potential(g, "weight_mu")
    _, basis = assemble_and_decompose(g, pot, 256)
    psi = build_cutoff(g, "exterior", 2.0)
    u0 = gaussian(g, 1.0)
    uT = 0.1 * basis.vectors[:, 0].astype(complex)
    prob = LinearControlProblem(u0, uT, 1.0, psi, pot, 5e-4, basis)
    op = SOperator(prob)
    rng = np.random.default_rng(7)
    a = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    b = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    Sa, Sb = op.apply(a), op.apply(b)
    sym = abs(np.vdot(a, Sb) - np.conj(np.vdot(b, Sa))) / np.sqrt(abs(np.vdot(a, Sa) * np.vdot(b, Sb)))
    sol = solve_control(prob)
    drift = make_cn(g, pot, 5e-4).run(u0, prob.n_steps, store=False)
    sol0 = solve_control(LinearControlProblem(u0, drift, 1.0, psi, pot, 5e-4, basis))
    h0 = float(np.max(np.abs(sol0.h.fields)))
    wall = time.perf_counter() - t0
    ok = sol.target_error <= 1e-6 and sym <= 1e-9 and h0 == 0.0 and wall <= 600
    report(7, ok, f"target error {sol.target_error:.1e} ({sol.cg_iterations} CG its); S symmetry {sym:.1e}; "
                  f"drift-matched max|h| {h0:.1e}; wall {wall:.1f}s")
    assert ok


def test_criterion_08_observability(report):
    ext = []
    for dx in (0.04, 0.02, 0.01):
        g = GridSpec.from_spacing(30.0, dx)
        pot = build_potential(g, "weight_mu")
        _, basis = assemble_and_decompose(g, pot, 64)
        z = np.zeros(g.n_points, dtype=complex)
        op = SOperator(LinearControlProblem(z, z, 1.0, build_cutoff(g, "exterior", 2.0), pot, 5e-4, basis))
        ext.append(estimate_observability(op))
    spread = max(ext) / min(ext) - 1
    # the interior constant at T=1 is zero to roundoff; a long horizon on a wide box resolves it
    g = GridSpec.from_spacing(100.0, 0.05)
    pot = build_potential(g, "weight_mu")
    _, basis = assemble_and_decompose(g, pot, 256)
    z = np.zeros(g.n_points, dtype=complex)
    psi = build_cutoff(g, "interior", 2.0)
    inner = []
    for n in (64, 128, 256):
        sub = type(basis)(basis.operator, basis.eigenvalues[:n], basis.vectors[:, :n])
        inner.append(observability_exact(SOperator(LinearControlProblem(z, z, 20.0, psi, pot, 5e-4, sub))))
    ok = min(ext) > 0 and spread <= 0.10 and inner[0] > inner[1] > inner[2]
    report(8, ok, "exterior C " + ", ".join(f"{c:.4e}" for c in ext) + f" (spread {spread:.1%}); interior C "
                  + ", ".join(f"{c:.4f}" for c in inner) + " for 64/128/256 modes")
    assert ok


def test_criterion_09_nonlinear_fixed_point(report):
    g = GridSpec.from_spacing(15.0, 0.05)
    pot = build_potential(g, "weight_mu")
    _, basis = assemble_and_decompose(g, pot, 128)
    kernel = KernelSpec("poisson_split", g)
    runs = {}
    for amp in (0.05, 0.1):
        u0 = normalize_w1(gaussian(g, 1.0), basis, amp)
        uT = normalize_w1(gaussian(g, -2.0, np.sqrt(2.0), 1.0), basis, amp)
        prob = LinearControlProblem(u0, uT, 1.0, build_cutoff(g, "exterior", 2.0), pot, 1e-3, basis)
        runs[amp] = fixed_point_solve(NonlinearControlRun(prob, kernel))
    r = runs[0.05]
    scale = runs[0.1].ratios[0] / r.ratios[0]
    ok = r.converged and r.iterations <= 10 and r.verified_target_error <= 1e-6 and 2.0 <= scale <= 6.0
    report(9, ok, f"amplitude 0.05: {r.iterations} iterations, verified target error {r.verified_target_error:.1e}; "
                  f"contraction ratio x{scale:.2f} on doubling (4 +- 50%)")
    assert ok


@pytest.mark.xfail(strict=True, reason="exterior costs of low modes spread by about x3.9; see decisions ledger")
def test_criterion_10_noncontrol_signature(report):
    Ns = list(range(2, 9))
    g = GridSpec.from_spacing(30.0, 0.02)
    _, basis = assemble_and_decompose(g, build_potential(g, "weight_mu"), 128)
    inner = discrete_cost_scan(Ns, kind="interior", basis=basis, cg_max_iter=300, n_probe=64).rows
    outer = discrete_cost_scan(Ns, kind="exterior", basis=basis, cg_max_iter=300, n_probe=64).rows
    ci = [r["cost"] for r in inner]
    bq = [r["bound_quantity"] for r in inner]
    ce = [r["cost"] for r in outer]
    grow = ci[-1] / ci[0]
    mono = all(b > a for a, b in zip(ci, ci[1:]))
    bq_down = all(b < a for a, b in zip(bq, bq[1:]))
    spread = max(ce) / min(ce)
    ok = grow >= 2 and bq_down and spread <= 2
    report(10, ok, f"interior cost(8)/cost(2) x{grow:.0f} (monotone: {mono}); bound quantity decreasing: {bq_down}; "
                   f"exterior max/min x{spread:.2f} (needs <= 2)")
    assert ok


def test_criterion_11_scaling_signature(report):
    res = scaling_family_check([0.1, 0.05, 0.025])
    worst = max(max(r["l1_defect"], r["l2_defect"], r["dx_l1_defect"], r["dx_l2_defect"]) for r in res.rows)
    weighted = max(r["l2mu_excess"] for r in res.rows)
    ok = worst <= 1e-8 and weighted <= 1e-8 and abs(res.slope - 1) <= 0.3
    report(11, ok, f"scaling identity defect {worst:.1e}, weighted bound excess {weighted:.2e}; "
                   f"deviation slope {res.slope:.3f} (1 +- 0.3)")
    assert ok


def test_criterion_12_verify_determinism(report, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "hartree_control", "verify", "--seed", "12", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(sorted(out.glob("*.csv")))
    same = [p.name for p in outs[0]] == [p.name for p in outs[1]] and all(
        a.read_bytes() == b.read_bytes() for a, b in zip(*outs))
    report(12, same, f"{len(outs[0])} CSV artifact(s) byte-identical across two seeded runs: {same}")
    assert same
