import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from hartree_control import airy
from hartree_control.grid import (GridError, GridSpec, build_cutoff, build_potential, cutoff_values, smoothstep,
                                  weight_mu, weight_mu_dx, weight_mu_dxx)


def test_grid_validation():
    with pytest.raises(GridError):
        GridSpec(10.0, 100)
    with pytest.raises(GridError):
        GridSpec(-1.0, 101)
    g = GridSpec.from_spacing(30.0, 0.02)
    assert g.n_points == 3001 and g.x[g.center] == 0.0 and g.dx == pytest.approx(0.02)


def test_weight_mu_is_c2_at_the_joint():
    # polynomial values at |x| = 2 must match |x|, sign(x), 0
    for s in (-1, 1):
        x_in, x_out = np.array([s * (2 - 1e-12)]), np.array([s * (2 + 1e-12)])
        assert weight_mu(x_in)[0] == pytest.approx(weight_mu(x_out)[0], abs=1e-10)
        assert weight_mu_dx(x_in)[0] == pytest.approx(s, abs=1e-10)
        assert weight_mu_dxx(x_in)[0] == pytest.approx(0.0, abs=1e-10)
    assert weight_mu(np.array([0.0]))[0] == 1.0


@given(st.floats(-50, 50))
def test_weight_mu_bounds(x):
    m = weight_mu(np.array([x]))[0]
    assert m >= max(1.0, abs(x)) - 1e-12
    assert m <= abs(x) + 1.0


@given(st.floats(-1, 2))
def test_smoothstep_range_and_monotone(t):
    a, b = smoothstep(np.array([t, t + 1e-3]))
    assert 0 <= a <= b <= 1


def test_cutoff_shapes():
    g = GridSpec.from_spacing(12.0, 0.01)
    x = g.x
    ext = build_cutoff(g, "exterior", 2.0).values
    assert np.all(ext[np.abs(x) <= 2] == 0) and np.all(ext[np.abs(x) >= 3] == 1)
    inn = build_cutoff(g, "interior", 2.0).values
    assert np.all(inn[np.abs(x) <= 3] == 1) and np.all(inn[np.abs(x) >= 4] == 0)
    q = cutoff_values(x, "multiplier_q", 2.0)
    assert np.allclose(q[np.abs(x) <= 4], x[np.abs(x) <= 4]) and np.all(q[np.abs(x) >= 5] == 0)
    with pytest.raises(GridError):
        build_cutoff(GridSpec.from_spacing(4.0, 0.1), "exterior", 2.0)
    with pytest.raises(GridError):
        build_potential(g, "linear_field")


def test_airy_eval_matches_scipy():
    x = np.linspace(-40, 15, 2001)
    ai, aip = airy.airy_eval(x)
    ref, refp = special.airy(x)[:2]
    scale = np.maximum(1.0, np.abs(x) ** 0.25)
    assert np.max(np.abs(ai - ref) / scale) < 1e-10
    assert np.max(np.abs(aip - refp) / scale**2) < 1e-9
    assert airy.overlap_discrepancy() < 1e-9


def test_airy_zeros_match_scipy():
    a, ap, _, _ = special.ai_zeros(30)
    # ai_zeros is itself only ~1e-12 accurate; the residual check is the sharp one
    for n in range(30):
        z, zp = airy.airy_zero("Ai", n), airy.airy_zero("Ai'", n)
        assert z == pytest.approx(-a[n], rel=1e-10) and zp == pytest.approx(-ap[n], rel=1e-10)
        assert abs(special.airy(-z)[0]) < 1e-12 and abs(special.airy(-zp)[1]) < 1e-11
    assert airy.airy_zero("Ai", 4) == pytest.approx(7.944133587120853, abs=1e-13)


def test_eigenvalue_interlacing_and_frozen_values():
    lam = airy.airy_eigenvalues(40)
    assert lam[0] == pytest.approx(1.0187929716474711, abs=1e-12)
    assert lam[1] == pytest.approx(2.338107410459767, abs=1e-12)
    assert np.all(np.diff(lam) > 0)


def test_eigenpair_normalized_and_parity():
    g = GridSpec.from_spacing(30.0, 0.01)
    for N in (0, 1, 4, 7):
        pair, phi = airy.eigenpair(N, g)
        assert np.sum(phi**2) * g.dx == pytest.approx(1.0, abs=1e-8)
        assert np.allclose(phi[::-1], (-1) ** N * phi, atol=1e-10)
    with pytest.raises(airy.UnderResolvedError):
        airy.eigenpair(400, GridSpec.from_spacing(30.0, 0.1))
