import numpy as np
import pytest

from hartree_control.fields import gaussian, normalize_w1
from hartree_control.grid import GridSpec, build_cutoff, build_potential
from hartree_control.hartree import KernelSpec
from hartree_control.hum import LinearControlProblem, solve_control
from hartree_control.noncontrol import (avron_identity_check, bound_quantity, bump_constants, cost_tail_start,
                                        discrete_cost_scan, scaled_bump)
from hartree_control.nonlinear import NonContractionError, NonlinearControlRun, fixed_point_solve
from hartree_control.spectral import assemble_and_decompose

G = GridSpec.from_spacing(10.0, 0.05)
POT = build_potential(G, "weight_mu")
_, B = assemble_and_decompose(G, POT, 48)


def _prob(amp):
    u0 = normalize_w1(gaussian(G, 1.0), B, amp)
    uT = normalize_w1(gaussian(G, -2.0, np.sqrt(2), 1.0), B, amp)
    return LinearControlProblem(u0, uT, 1.0, build_cutoff(G, "exterior", 2.0), POT, 2e-3, B)


def test_zero_kernel_reduces_to_linear():
    p = _prob(0.05)
    run = fixed_point_solve(NonlinearControlRun(p, KernelSpec("zero", G)))
    lin = solve_control(p)
    assert run.converged and run.iterations == 1
    assert np.max(np.abs(run.h.fields - lin.h.fields)) < 1e-14


def test_small_data_converges_and_is_verified():
    run = fixed_point_solve(NonlinearControlRun(_prob(0.05), KernelSpec("poisson_split", G)))
    assert run.converged and run.iterations <= 10
    assert run.verified_target_error < 1e-6
    assert all(r < 1 for r in run.ratios)


def test_large_data_reports_noncontraction():
    with pytest.raises(NonContractionError) as info:
        fixed_point_solve(NonlinearControlRun(_prob(30.0), KernelSpec("poisson_split", G), max_iter=12))
    assert len(info.value.run.distances) >= 4


def test_bump_constants_and_scaling():
    c = bump_constants()
    assert c["l1"] == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(-0.05, 0.05, 20001)
    f, _ = scaled_bump(x, 0.05)
    assert np.trapezoid(f, x) == pytest.approx(1.0, abs=1e-6)


def test_bound_quantity_decreases():
    lam = np.array([1.0, 4.0, 9.0, 30.0])
    vals = [bound_quantity(l) for l in lam]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_cost_tail_start():
    assert cost_tail_start([1, 5, 3, 8, 9]) == 2


def test_exterior_scan_converges_small():
    g = GridSpec.from_spacing(15.0, 0.05)
    _, b = assemble_and_decompose(g, build_potential(g, "weight_mu"), 48)
    res = discrete_cost_scan([2, 3], kind="exterior", basis=b, dt=1e-3, n_probe=16)
    assert all(r["converged"] for r in res.rows)
    assert res.observability > 0


def test_conjugation_identity_literal_form_fails():
    g = GridSpec.from_spacing(60.0, 0.05)
    u = np.exp(-g.x**2 / 2).astype(complex)
    assert avron_identity_check(0.3, -0.3, [u], g) < 1e-10
    assert avron_identity_check(0.3, -0.3, [u], g, literal=True) > 0.1
