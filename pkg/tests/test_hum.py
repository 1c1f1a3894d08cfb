import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hartree_control.fields import gaussian, random_coeffs
from hartree_control.grid import GridSpec, build_cutoff, build_potential, unit_cutoff, weight_mu
from hartree_control.hum import (ControlNotConverged, LinearControlProblem, SOperator, cg_w_minus1,
                                 estimate_observability, evolve_with_P, multiplier_identity_check,
                                 observability_exact, solve_control)
from hartree_control.spectral import assemble_and_decompose

G = GridSpec.from_spacing(10.0, 0.05)
POT = build_potential(G, "weight_mu")
_, B = assemble_and_decompose(G, POT, 24)
PSI = build_cutoff(G, "exterior", 2.0)
DT = 2e-3


def problem(u0=None, uT=None, psi=PSI, T=0.5, **kw):
    u0 = gaussian(G, 1.0) if u0 is None else u0
    uT = 0.1 * B.vectors[:, 0].astype(complex) if uT is None else uT
    return LinearControlProblem(u0, uT, T, psi, POT, DT, B, **kw)


def test_grid_path_matches_closed_form():
    # columns of S by grid streaming versus the modal geometric-sum formula
    p = problem()
    modal, grid = SOperator(p, "modal"), SOperator(p, "grid")
    S = modal.matrix()
    for j in (0, 5, 23):
        e = np.zeros(24, complex)
        e[j] = 1
        assert np.max(np.abs(grid.apply(e) - S[:, j])) < 1e-12 * np.max(np.abs(S))


def test_S_hermitian_psd():
    S = SOperator(problem()).matrix()
    assert np.max(np.abs(S - S.conj().T)) < 1e-15
    assert np.min(np.linalg.eigvalsh(S)) > 0


def test_unit_cutoff_constant():
    # psi = 1 gives the closed form 1 / (1 + lam_max^2 dt^2 / 4) when T = 1
    op = SOperator(problem(psi=unit_cutoff(G), T=1.0))
    lam = B.eigenvalues[-1]
    assert observability_exact(op) == pytest.approx(1 / (1 + lam**2 * DT**2 / 4), rel=1e-10)


def test_lanczos_matches_dense():
    op = SOperator(problem())
    assert estimate_observability(op) == pytest.approx(observability_exact(op), rel=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_cg_solves_dense_system(seed):
    op = SOperator(problem())
    S = op.matrix()
    rhs = random_coeffs(24, np.random.default_rng(seed))
    x, its, hist = cg_w_minus1(op.apply, rhs, op.lam, 1e-12, 500)
    ref = np.linalg.solve(S, rhs)
    lam = op.lam
    assert np.sqrt(np.sum(lam * np.abs(S @ x - rhs) ** 2)) <= 1e-9 * np.sqrt(np.sum(lam * np.abs(rhs) ** 2))
    assert np.linalg.norm(x - ref) <= 1e-4 * np.linalg.norm(ref)


def test_control_reaches_target_and_cost_identity():
    p = problem()
    sol = solve_control(p)
    assert sol.target_error < 1e-8
    S = SOperator(p).matrix()
    x = sol.v0.coeffs
    assert sol.cost**2 == pytest.approx(np.vdot(x, S @ x).real, rel=1e-9)


def test_nonconvergence_raises_with_best_iterate():
    with pytest.raises(ControlNotConverged) as info:
        solve_control(problem(psi=build_cutoff(G, "interior", 2.0), cg_max_iter=3))
    assert info.value.iterations == 3 and info.value.best is not None


def test_input_validation():
    with pytest.raises(ValueError):
        problem(u0=np.zeros(5, complex))
    with pytest.raises(ValueError):
        LinearControlProblem(gaussian(G), gaussian(G), 0.333, PSI, POT, DT, B)


def test_multiplier_identity_second_order():
    g = GridSpec.from_spacing(12.0, 0.04)
    alpha = weight_mu(g.x) + 0.5 * np.exp(-g.x**2)
    q = build_cutoff(g, "multiplier_q", 2.0)
    res = []
    for dx, dt in ((0.04, 4e-3), (0.02, 2e-3)):
        g = GridSpec.from_spacing(12.0, dx)
        alpha = weight_mu(g.x) + 0.5 * np.exp(-g.x**2)
        w = evolve_with_P(gaussian(g, 0.0, 1.0, 1.5), 0.5, dt, g, alpha)
        res.append(multiplier_identity_check(w, build_cutoff(g, "multiplier_q", 2.0), g, alpha)["residual"])
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.2)
