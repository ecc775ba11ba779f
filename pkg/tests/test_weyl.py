import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steplike import potential as P
from steplike.forward import WaveNumber, scatter, symmetric_real_grid
from steplike.propagate import weyl_branch
from steplike.weyl import (G_contour, WeylError, a_amplitude_check, coeffs_from_m, g_of_k, g_of_k_alt, m_functions,
                           m_minus, m_plus, truncation_delta_G)


def test_free_m_functions_equal_ik():
    k = WaveNumber.contour(np.linspace(-5, 5, 11), 1.0)
    ms = m_functions(P.zero(), k)
    np.testing.assert_allclose(ms.m_minus, 1j * k.k)
    np.testing.assert_allclose(ms.m_plus, 1j * k.k)


@pytest.mark.parametrize("C", [-2.0, 0.5, 3.0])
def test_constant_left_half_line(C):
    q = P.constant(C, -P.INF, 0.0)
    k = WaveNumber.contour(np.linspace(-20, 20, 41), 2.5)
    np.testing.assert_allclose(m_minus(q, k), 1j * weyl_branch(k.k, C), rtol=1e-12)


def test_m_minus_well_against_closed_form():
    # left of -w the Weyl solution is e^{-ikx}; inside the well psi'' = -p^2 psi
    V, w = 1.5, 1.0
    q = P.square_well(-V, -w, 0.0)
    wn = WaveNumber.contour(np.linspace(-10, 10, 21), 1.0)
    k = wn.k
    p = np.sqrt(k * k + V + 0j)
    slope = -1j * k
    u = np.cos(p * w) + slope / p * np.sin(p * w)
    up = -p * np.sin(p * w) + slope * np.cos(p * w)
    np.testing.assert_allclose(m_minus(q, wn), -up / u, rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(-3.0, 3.0))
def test_herglotz_property(a, b, level):
    # k in the first quadrant has Im k^2 > 0, so Im m_+ > 0
    q = P.square_well(level, 0.0, 1.0)
    mp, _ = m_plus(q, complex(a, b))
    assert mp.imag > 0


def test_real_axis_coefficients_match_matching(headline):
    q = headline
    k = symmetric_real_grid(0.37, 6.0)
    c = coeffs_from_m(m_functions(q, k))
    T, L, R, _ = scatter(q, k)
    _, _, Rp, _ = scatter(q.plus(), k)
    np.testing.assert_allclose(c.R, R, atol=1e-11)
    np.testing.assert_allclose(c.R_plus, Rp, atol=1e-11)


def test_G_is_difference_of_reflections_on_contour(headline):
    k = WaveNumber.contour(np.linspace(-15, 15, 31), 0.8)
    _, _, R, _ = scatter(headline, k)
    _, _, Rp, _ = scatter(headline.plus(), k)
    np.testing.assert_allclose(G_contour(headline, k), R - Rp, rtol=1e-8, atol=1e-12)


def test_two_G_routes_agree(headline):
    ms = m_functions(headline, WaveNumber.contour(np.linspace(-40, 40, 33), 4.0))
    np.testing.assert_allclose(g_of_k_alt(ms), g_of_k(ms), rtol=1e-10)


def test_truncation_delta_against_direct_difference():
    q = P.combine(P.exp_decay(-1.0, 1.0, -P.INF, 0.0), P.constant(0.5, 0.0, 1.0))
    k = WaveNumber.contour(np.linspace(-20, 20, 41), 3.0)
    d = truncation_delta_G(q, 1.5, k)
    qt = P.truncate(q, 1.5)
    np.testing.assert_allclose(d.G_trunc, G_contour(qt, k), rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(d.delta, G_contour(q, k) - G_contour(qt, k), atol=1e-11)
    assert np.max(np.abs(d.delta)) > 1e-7


def test_zero_wavenumber_is_rejected():
    q = P.zero()
    with pytest.raises(WeylError):
        m_plus(q, 0.0 + 0j)


def test_a_amplitude_small_norm():
    q = P.combine(P.square_well(-0.01, -1.0, -0.5), P.constant(0.01, 0.3, 0.8))
    chk = a_amplitude_check(q, "-")
    assert chk.satisfied, chk.max_violation
    assert np.max(np.abs(chk.A_approx - chk.q_values)) < 1e-3


def test_a_amplitude_agrees_where_potentials_agree():
    q1 = P.combine(P.square_well(-0.5, -1.0, 0.0), P.square_well(-0.3, -3.0, -2.0))
    q2 = P.square_well(-0.5, -1.0, 0.0)
    grid = -np.linspace(0.1, 0.9, 9)
    a1 = a_amplitude_check(q1, "-", grid=grid, h=3.0).A_approx
    a2 = a_amplitude_check(q2, "-", grid=grid, h=3.0).A_approx
    np.testing.assert_allclose(a1, a2, atol=1e-6)
