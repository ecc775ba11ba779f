import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steplike import potential as P
from steplike.forward import ScatteringData, WaveNumber, bound_states, scatter_real, symmetric_real_grid
from steplike.kernels import (KERNEL_CACHE, ContourGrid, ContourSamples, KernelError,
                              KernelFunction, KernelWindowError, fourier_synthesis, g_base_kernel,
                              marchenko_kernel_classical, marchenko_kernel_contour, sample, taper)
from steplike.weyl import G_contour


def test_lorentzian_transform_on_contour():
    # (1/2pi) int e^{ikt} 2/(1 + k^2) dk = e^{-|t|}; pole at k = i lies above h = 0.5
    grid = ContourGrid.uniform_grid(0.5, 4000.0, 0.05)
    k = grid.k.k
    t, v, imag, err = fourier_synthesis(2 / (1 + k * k), grid, (0.5, 6.0))
    np.testing.assert_allclose(v, np.exp(-t), atol=2e-4)
    assert imag < 1e-10


def test_gaussian_transform_direct_sum():
    grid = ContourGrid.gauss(0.0, 12.0, panels=80)
    t = np.linspace(-3, 3, 13)
    a = grid.alpha_nodes
    _, v, _, _ = fourier_synthesis(np.exp(-a * a / 4), grid, (-3, 3), t_grid=t, use_taper=False)
    np.testing.assert_allclose(v, np.exp(-t * t) / math.sqrt(math.pi), atol=1e-12)


def test_taper_shape():
    a = np.array([0.0, 0.5, 0.9, 1.0, 1.5])
    w = taper(a, 1.0)
    assert w[0] == 1.0 and w[-1] == 0.0 and w[-2] == 0.0
    assert 0.99 < w[1] <= 1.0 and w[2] < 2e-3


def test_window_outside_fft_range_raises():
    grid = ContourGrid.uniform_grid(1.0, 100.0, 1.0)
    with pytest.raises(KernelError):
        fourier_synthesis(np.ones(grid.alpha_nodes.size), grid, (-10.0, 1.0))


def test_soliton_classical_kernel_is_pure_exponential():
    sd = ScatteringData(symmetric_real_grid(0.05, 200.0), *(np.zeros(8000, complex),) * 3,
                        [(1.0, 1.3)])
    M = marchenko_kernel_classical(sd, window=(-2.0, 20.0))
    s = np.linspace(-1.5, 15.0, 60)
    np.testing.assert_allclose(M(s), 1.69 * np.exp(-s), atol=1e-12)
    assert M.decay_rate == pytest.approx(1.0, rel=1e-6)


def test_classical_and_contour_kernels_agree_for_compact_well():
    q = P.square_well(-0.5, -2.0, -1.0)
    bs = bound_states(q)
    assert len(bs) == 1
    k = symmetric_real_grid(0.02, 3000.0)
    T, L, R = scatter_real(q, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        Mc = marchenko_kernel_classical(ScatteringData(k, T, L, R, bs), window=(0.0, 12.0))
    grid = ContourGrid.uniform_grid(bs[0][0] + 0.5, 3000.0, 0.05)
    from steplike.forward import scatter
    Mh = marchenko_kernel_contour(ContourSamples(grid, scatter(q, grid.k)[2], "R"), window=(0.0, 12.0))
    s = np.linspace(0.1, 10.0, 200)
    np.testing.assert_allclose(Mc(s), Mh(s), atol=1e-4)


def test_G_kernel_vanishes_beyond_twice_support_end(headline):
    grid = ContourGrid.uniform_grid(4.8637, 2.0e3, 0.25)
    G = g_base_kernel(sample(lambda k: G_contour(headline, k), grid), t_window=(-4.5, 12.0))
    t = np.linspace(2.5, 10.0, 50)
    assert np.max(np.abs(G(t))) < 1e-8
    assert np.max(np.abs(G(np.linspace(-4.0, -2.0, 50)))) > 1e-2


def test_base_kernel_cache_is_per_sample(headline):
    KERNEL_CACHE.clear()
    grid = ContourGrid.uniform_grid(4.8637, 2.0e3, 0.25)
    s1 = sample(lambda k: G_contour(headline, k), grid)
    a = g_base_kernel(s1, t_window=(-2.0, 6.0))
    assert g_base_kernel(s1, t_window=(-2.0, 6.0)) is a
    s2 = ContourSamples(grid, 2 * s1.values)
    b = g_base_kernel(s2, t_window=(-2.0, 6.0))
    np.testing.assert_allclose(b.values, 2 * a.values)


def test_roundoff_guard_for_deep_window(headline):
    grid = ContourGrid.uniform_grid(4.8637, 500.0, 0.25)
    s1 = sample(lambda k: G_contour(headline, k), grid)
    with pytest.raises(KernelWindowError):
        g_base_kernel(s1, t_window=(-12.0, 6.0))


def _poly_kernel(coef, lo=-2.0, hi=6.0):
    s = np.linspace(lo, hi, 401)
    return KernelFunction(s, np.polyval(coef, s), "test", tail="none")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.floats(-1.0, 4.0), st.floats(0.01, 0.5))
def test_cell_average_exact_for_cubics(coef, c, delta):
    K = _poly_kernel(coef)
    u = np.linspace(-delta, delta, 2001)
    wts = (delta - np.abs(u)) / delta**2
    ref = np.trapezoid(np.polyval(coef, c + u) * wts, u)
    assert K.cell_average(np.array([c]), delta)[0] == pytest.approx(ref, abs=1e-6 * (1 + abs(ref)))


def test_kernel_refuses_extrapolation_below_grid():
    K = _poly_kernel([1.0])
    with pytest.raises(KernelError):
        K(np.array([-3.0]))


def test_zero_tail_beyond_grid():
    s = np.linspace(0, 4, 41)
    K = KernelFunction(s, np.exp(-s), "test")
    assert K(np.array([10.0]))[0] == 0.0
    assert K.shift(0.5)(np.array([1.0]))[0] == pytest.approx(math.exp(-2.0), rel=1e-4)


def test_contour_samples_csv_round_trip(tmp_path):
    grid = ContourGrid.uniform_grid(2.0, 10.0, 0.5)
    smp = ContourSamples(grid, np.exp(-np.abs(grid.alpha_nodes)) * (1 + 1j))
    smp.to_csv(tmp_path / "g.csv")
    back = ContourSamples.from_csv(tmp_path / "g.csv")
    assert back.grid.uniform and back.grid.h == 2.0
    np.testing.assert_array_equal(back.values, smp.values)
    assert back.l1_norm(-0.5) == pytest.approx(smp.l1_norm(-0.5))


def test_shift_kernel_and_g_kernel(headline):
    from steplike.kernels import g_kernel, shift_kernel

    s = np.linspace(-4, 8, 1201)
    K = KernelFunction(s, np.sin(s) * np.exp(-0.2 * s), "test")
    Ks = shift_kernel(K, -0.75)
    t = np.linspace(0.0, 5.0, 11)
    np.testing.assert_allclose(Ks(t), K(t - 1.5), atol=1e-14)
    grid = ContourGrid.uniform_grid(4.8637, 2.0e3, 0.25)
    smp = sample(lambda k: G_contour(headline, k), grid)
    Gx = g_kernel(smp, None, -1.0, s_max=8.0)
    base = g_base_kernel(smp, t_window=(-2.0, 6.0))
    np.testing.assert_allclose(Gx(np.linspace(0, 7, 15)), base(np.linspace(-2, 5, 15)), atol=1e-8)
