"""Magnus propagation against an adaptive Runge-Kutta reference."""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from steplike import potential as P
from steplike.propagate import propagate, weyl_branch


def _reference(k, qfun, x0, x1, u0, up0):
    def rhs(x, y):
        u = y[0] + 1j * y[1]
        up = y[2] + 1j * y[3]
        upp = (qfun(x) - k * k) * u
        return [up.real, up.imag, upp.real, upp.imag]

    sol = solve_ivp(rhs, (x0, x1), [u0.real, u0.imag, up0.real, up0.imag], method="DOP853",
                    rtol=1e-12, atol=1e-13)
    y = sol.y[:, -1]
    return y[0] + 1j * y[1], y[2] + 1j * y[3]


@pytest.mark.parametrize("k", [0.7, 2.0 + 0.3j, 5.0])
def test_smooth_potential_matches_rk(k):
    q = P.soliton(1.0, 1.3)
    u, up, ln = propagate(np.array([k]), q, -3.0, 3.0, 1.0, 1j * k)
    scale = np.exp(ln[0])
    ur, upr = _reference(k, lambda x: float(P.evaluate(q, x)), -3.0, 3.0, 1.0 + 0j, 1j * k)
    assert abs(u[0] * scale - ur) < 1e-6 * max(1, abs(ur))
    assert abs(up[0] * scale - upr) < 1e-6 * max(1, abs(upr))


def test_constant_piece_is_exact():
    q = P.constant(2.0, -1.0, 1.0)
    k = np.array([0.5 + 0.1j])
    kap = np.sqrt(2.0 - k * k + 0j)
    u, up, ln = propagate(k, q, -1.0, 1.0, 1.0, 0.0)
    s = np.exp(ln)
    np.testing.assert_allclose(u * s, np.cosh(2 * kap), rtol=1e-12)
    np.testing.assert_allclose(up * s, kap * np.sinh(2 * kap), rtol=1e-12)


def test_weyl_branch_upper_half_plane():
    k = np.array([1.0 + 0.5j, -1.0 + 0.5j, 0.1 + 2j, 3.0, -3.0])
    lam = weyl_branch(k, 1.0)
    np.testing.assert_allclose(lam * lam, k * k - 1.0, rtol=1e-12)
    assert np.all(lam[:3].imag > 0)
    assert lam[3].real > 0 and lam[4].real < 0
