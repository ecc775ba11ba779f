import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import well_transmission
from steplike import potential as P
from steplike.forward import (ScatteringData, ScatteringError, WaveNumber, bound_states, jost_y_plus, scatter,
                              scatter_contour, scatter_real, symmetric_real_grid,
                              transmission_plus)


def test_square_well_transmission_matches_closed_form():
    q = P.square_well(-2.0, 0.0, 1.5)
    k = np.linspace(0.2, 15.0, 40)
    T, L, R = scatter_real(q, WaveNumber.real(k))
    np.testing.assert_allclose(T, well_transmission(k, 2.0, 0.0, 1.5), rtol=1e-10, atol=1e-12)


def test_zero_potential_is_transparent():
    k = WaveNumber.real(np.array([-2.0, 0.5, 3.0]))
    T, L, R = scatter_real(P.zero(), k)
    np.testing.assert_allclose(T, 1.0)
    np.testing.assert_allclose(np.abs(L) + np.abs(R), 0.0, atol=1e-15)


def test_soliton_is_reflectionless_with_one_bound_state():
    q = P.soliton(1.0, 1.3)
    T, L, R = scatter_real(q, WaveNumber.real(np.linspace(0.1, 10, 25)))
    assert np.max(np.abs(R)) < 1e-8
    bs = bound_states(q)
    assert len(bs) == 1
    assert bs[0][0] == pytest.approx(1.0, abs=1e-8)
    assert bs[0][1] == pytest.approx(1.3, rel=1e-6)


def test_square_well_bound_states_solve_dispersion_relation():
    V, w = 6.0, 2.0
    q = P.square_well(-V, 0.0, w)
    bs = bound_states(q)
    # even/odd states: tan or -cot of p w/2 equals kappa/p, p = sqrt(V - kappa^2)
    for kappa, c in bs:
        p = math.sqrt(V - kappa**2)
        f = (p * math.tan(p * w / 2) - kappa, p / math.tan(p * w / 2) + kappa)
        assert min(abs(f[0]), abs(f[1])) < 1e-8 * V
        assert c > 0
    n_expected = math.ceil(math.sqrt(V) * w / math.pi)
    assert len(bs) == n_expected


def test_transmission_plus_routes_agree():
    q = P.constant(0.5, 0.0, 1.0)
    k = WaveNumber.contour(np.linspace(-30, 30, 21), 2.0)
    T, _, _, _ = scatter(q, k)
    np.testing.assert_allclose(transmission_plus(q, k), T, rtol=1e-10)


def test_contour_scattering_condition_guard():
    q = P.square_well(-1.0, -8.0, 8.0)
    with pytest.raises(ScatteringError):
        scatter_contour(q, WaveNumber.contour(np.array([0.0, 1.0]), 6.0), cond_max=1e3)


def test_scattering_data_csv_round_trip(tmp_path):
    q = P.square_well(-1.0, 0.0, 1.0)
    k = symmetric_real_grid(0.5, 3.0)
    T, L, R = scatter_real(q, k)
    sd = ScatteringData(k, T, L, R, bound_states(q))
    sd.to_csv(tmp_path / "s.csv", tmp_path / "b.csv")
    back = ScatteringData.from_csv(tmp_path / "s.csv", tmp_path / "b.csv")
    np.testing.assert_array_equal(back.R, R)
    assert back.bound_states == sd.bound_states


def test_symmetric_grid_avoids_zero():
    k = symmetric_real_grid(0.1, 1.0).k.real
    assert k.size == 20 and np.all(k != 0)
    np.testing.assert_allclose(k, -k[::-1])


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0).filter(lambda v: abs(v) > 1e-3), st.floats(0.2, 2.0),
       st.floats(0.1, 20.0))
def test_unitarity_and_reciprocity(level, width, k):
    q = P.square_well(level, 0.0, width)
    kk = WaveNumber.real(np.array([-k, k]))
    T, L, R = scatter_real(q, kk)
    assert abs(abs(T[1]) ** 2 + abs(L[1]) ** 2 - 1) < 1e-10
    assert abs(abs(T[1]) ** 2 + abs(R[1]) ** 2 - 1) < 1e-10
    assert abs(T[0] - np.conj(T[1])) < 1e-10
    # T conj(L) + conj(T) R = 0
    assert abs(T[1] * np.conj(L[1]) + np.conj(T[1]) * R[1]) < 1e-10


def test_jost_y_plus_free_is_one():
    prof = jost_y_plus(P.constant(0.0, 0.0, 1.0), WaveNumber.contour(np.array([-2.0, 1.0]), 1.0))
    np.testing.assert_allclose(prof.y, 1.0)


def test_jost_y_plus_matches_ode_at_imaginary_k():
    from scipy.integrate import solve_ivp

    q = P.constant(1.0, 0.0, 1.0)
    k = 1j
    # u = e^{ikx} y solves -u'' + q u = k^2 u with u = e^{ikx} beyond x = 1
    rhs = lambda x, y: [y[1], (float(P.evaluate(q, x)) - k.real**2 + k.imag**2) * y[0]]
    sol = solve_ivp(rhs, (1.0, 0.0), [np.exp(-1.0), -np.exp(-1.0)], rtol=1e-12, atol=1e-14)
    prof = jost_y_plus(q, WaveNumber.contour(np.array([0.0]), 1.0))
    assert prof.y[0, 0].real == pytest.approx(sol.y[0, -1], rel=1e-10)
    assert abs(prof.y[0, 0].imag) < 1e-12
    assert np.all(prof.K_estimate < 10)
