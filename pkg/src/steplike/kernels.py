"""One-variable Hankel kernels: Marchenko kernels and the partial-data kernel.

A kernel is synthesized as a Fourier integral over a line ``Im k = h``::

    K(t) = (1/2 pi) int e^{ikt} F(k) dk = (1/2 pi) e^{-ht} int e^{i alpha t} F(alpha + ih) d alpha

On uniform alpha grids the sum is evaluated for all t at once by FFT.  The
result lives on a fine uniform t-grid (spacing ``pi/A``) and is wrapped by a
cubic spline.  :meth:`KernelFunction.cell_average` uses the spline's double
antiderivative to average the kernel exactly over cells, which is what the
cell discretization in :mod:`steplike.operators` needs.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from . import io
from .forward import ScatteringData, WaveNumber, as_wavenumber


class KernelError(RuntimeError):
    """Synthesis refused or kernel evaluated outside its grid."""


class KernelWindowError(KernelError):
    """The damping factor would amplify quadrature noise beyond tolerance."""


# ---------------------------------------------------------------------------
# contour grids and samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContourGrid:
    """Quadrature for the alpha-integral along ``R + ih``."""

    h: float
    alpha_nodes: np.ndarray
    weights: np.ndarray
    window: tuple[float, float]
    uniform: bool = False

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("negative contour height")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if not math.isclose(self.window[0], -self.window[1]):
            raise ValueError("window must be symmetric")

    @classmethod
    def uniform_grid(cls, h: float, A: float, d_alpha: float) -> "ContourGrid":
        """Midpoint nodes ``(j + 1/2) d_alpha`` on ``[-A, A]`` (trapezoid weights)."""
        n = int(math.ceil(A / d_alpha))
        a = (np.arange(-n, n) + 0.5) * d_alpha
        return cls(float(h), a, np.full(a.size, float(d_alpha)), (-n * d_alpha, n * d_alpha), True)

    @classmethod
    def gauss(cls, h: float, A: float, panels: int = 400, order: int = 16) -> "ContourGrid":
        """Composite Gauss-Legendre on ``[-A, A]``, panels graded towards 0."""
        s = np.linspace(-1.0, 1.0, panels + 1)
        edges = A * np.sign(s) * s**2
        t, w = leggauss(order)
        a, b = edges[:-1, None], edges[1:, None]
        x = (0.5 * (a + b) + 0.5 * (b - a) * t).ravel()
        wx = (0.5 * (b - a) * w).ravel()
        return cls(float(h), x, wx, (-A, A), False)

    @property
    def k(self) -> WaveNumber:
        if self.h > 0:
            return WaveNumber.contour(self.alpha_nodes, self.h)
        return WaveNumber.real(self.alpha_nodes)

    @property
    def d_alpha(self) -> float:
        if not self.uniform:
            raise ValueError("grid is not uniform")
        return float(self.weights[0])


@dataclass
class ContourSamples:
    """Values of an analytic function on a :class:`ContourGrid`."""

    grid: ContourGrid
    values: np.ndarray
    label: str = "G"

    def l1_norm(self, shift_x: float = 0.0) -> float:
        """Discrete ``||e^{2ikx} F||_{L^1(R+ih)}``."""
        return float(np.sum(self.grid.weights * np.abs(self.values))
                     * math.exp(-2 * self.grid.h * shift_x))

    def to_csv(self, path):
        a = self.grid.alpha_nodes
        io.write_csv(path, {"re_k": a, "im_k": np.full(a.size, self.grid.h),
                            f"re_{self.label}": self.values.real,
                            f"im_{self.label}": self.values.imag, "weight": self.grid.weights})

    @classmethod
    def from_csv(cls, path, label: str = "G") -> "ContourSamples":
        d = io.read_csv(path)
        a, h, w = d["re_k"], float(d["im_k"][0]), d["weight"]
        uniform = bool(np.allclose(w, w[0]) and np.allclose(np.diff(a), w[0]))
        grid = ContourGrid(h, a, w, (float(a[0] - w[0] / 2), float(a[-1] + w[-1] / 2)), uniform)
        return cls(grid, d[f"re_{label}"] + 1j * d[f"im_{label}"], label)


def sample(fn: Callable, grid: ContourGrid, label: str = "G") -> ContourSamples:
    """Evaluate ``fn(WaveNumber)`` on the grid nodes."""
    return ContourSamples(grid, np.asarray(fn(grid.k), dtype=complex), label)


# ---------------------------------------------------------------------------
# kernel functions
# ---------------------------------------------------------------------------

@dataclass
class KernelFunction:
    """Real kernel ``s -> K(s)`` on a grid, spline-interpolated in between.

    Beyond ``s_max`` the kernel is taken as zero when ``tail == "zero"``
    (decayed or compactly supported); below ``s_min`` evaluation fails.
    """

    s_grid: np.ndarray
    values: np.ndarray
    provenance: str
    decay_rate: float = float("nan")
    imag_residue: float = 0.0
    error_estimate: np.ndarray | None = None
    tail: str = "zero"
    meta: dict = field(default_factory=dict)
    _spline: CubicSpline | None = field(default=None, repr=False)
    _p2: tuple | None = field(default=None, repr=False)

    @property
    def s_min(self) -> float:
        return float(self.s_grid[0])

    @property
    def s_max(self) -> float:
        return float(self.s_grid[-1])

    def spline(self) -> CubicSpline:
        if self._spline is None:
            self._spline = CubicSpline(self.s_grid, self.values)
        return self._spline

    def _check(self, s):
        lo = float(np.min(s)) if np.size(s) else self.s_min
        if lo < self.s_min - 1e-12 * max(1.0, abs(self.s_min)):
            raise KernelError(f"kernel needed at s={lo:.6g} below its grid start {self.s_min:.6g}")
        if self.tail != "zero":
            hi = float(np.max(s)) if np.size(s) else self.s_max
            if hi > self.s_max + 1e-12 * max(1.0, abs(self.s_max)):
                raise KernelError(f"kernel needed at s={hi:.6g} beyond its grid end")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        self._check(s)
        out = self.spline()(np.clip(s, self.s_min, self.s_max))
        return np.where(s > self.s_max, 0.0, out)

    def _second_antiderivative(self, s):
        """P2 with P2'' = K, continued linearly past ``s_max`` (zero tail)."""
        if self._p2 is None:
            sp = self.spline()
            self._p2 = (sp.antiderivative(2), sp.antiderivative(1))
        p2, p1 = self._p2
        sc = np.minimum(s, self.s_max)
        return p2(sc) + np.where(s > self.s_max, p1(self.s_max) * (s - self.s_max), 0.0)

    def cell_average(self, c, delta: float):
        """Triangle-weighted average ``(1/delta^2) int K(c+u)(delta-|u|) du``.

        This is the entry of the piecewise-constant Galerkin matrix for cells
        of width ``delta`` whose centres add up to ``c``.
        """
        c = np.asarray(c, dtype=float)
        self._check(c - delta)
        P = self._second_antiderivative
        return (P(c + delta) - 2 * P(c) + P(c - delta)) / delta**2

    def shift(self, x: float) -> "KernelFunction":
        """``s -> K(s + 2x)``."""
        return shift_kernel(self, x)

    def resample(self, s_grid) -> "KernelFunction":
        s_grid = np.asarray(s_grid, dtype=float)
        return replace(self, s_grid=s_grid, values=self(s_grid), error_estimate=None,
                       _spline=None, _p2=None)

    def to_csv(self, path):
        io.write_csv(path, {"s": self.s_grid, "value": self.values})


def shift_kernel(M: KernelFunction, x: float) -> KernelFunction:
    """The shifted kernel ``M_x(s) = M(s + 2x)`` (pure reindexing)."""
    if x == 0.0:
        return M
    out = replace(M, s_grid=M.s_grid - 2 * x, _spline=None, _p2=None,
                  provenance=M.provenance, meta={**M.meta, "shift": M.meta.get("shift", 0.0) + x})
    if M._spline is not None:
        sp = M._spline
        out._spline = CubicSpline.construct_fast(sp.c, sp.x - 2 * x, sp.extrapolate)
    return out


def fit_decay(s: np.ndarray, v: np.ndarray) -> float:
    """Exponential decay rate from a log-linear fit of the non-negligible tail."""
    a = np.abs(v)
    if a.max(initial=0.0) == 0.0:
        return float("inf")
    keep = a > 1e-12 * a.max()
    idx = np.nonzero(keep)[0]
    if idx.size < 4:
        return float("inf")
    lo = idx[len(idx) // 2]
    sel = np.arange(lo, idx[-1] + 1)
    sel = sel[keep[sel]]
    if sel.size < 4 or np.ptp(s[sel]) == 0:
        return float("inf")
    slope = np.polyfit(s[sel], np.log(a[sel]), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# Fourier synthesis
# ---------------------------------------------------------------------------

def _fft_sum(values: np.ndarray, grid: ContourGrid):
    """``S(t) = sum_j w_j e^{i alpha_j t} F_j`` on the native t-grid, t sorted."""
    n = values.size
    da = grid.d_alpha
    a0 = float(grid.alpha_nodes[0])
    m = np.fft.fftfreq(n, 1.0 / n)          # signed integers
    t = 2 * np.pi * m / (n * da)
    S = np.fft.ifft(values) * n * da * np.exp(1j * a0 * t)
    o = np.argsort(t)
    return t[o], S[o]


def _direct_sum(values: np.ndarray, grid: ContourGrid, t: np.ndarray, chunk: int = 256):
    out = np.empty(t.size, complex)
    wf = grid.weights * values
    for i in range(0, t.size, chunk):
        tt = t[i:i + chunk]
        out[i:i + chunk] = np.exp(1j * np.outer(tt, grid.alpha_nodes)) @ wf
    return out


# Exponential spectral filter exp(-36 eta^16), eta = |alpha| / A.  It turns
# the slowly decaying leakage of a hard alpha cut-off into an error localized
# (width ~ 1/A) at kinks of the kernel.
TAPER_STRENGTH = -math.log(np.finfo(float).eps) * 1.0
TAPER_ORDER = 16


def taper(alpha, A: float):
    eta = np.abs(np.asarray(alpha, dtype=float)) / A
    return np.where(eta < 1.0, np.exp(-TAPER_STRENGTH * eta**TAPER_ORDER), 0.0)


def fourier_synthesis(values, grid: ContourGrid, window, t_grid=None, half_check: bool = True,
                      use_taper: bool = True):
    """``K(t) = (1/2pi) e^{-ht} sum w e^{i alpha t} F`` on ``window``.

    Returns ``(t, K, imag_residue, error_estimate)``.  The error estimate is
    the change when the alpha window is halved, so it carries the same
    ``e^{-ht}`` amplification as the kernel.
    """
    values = np.asarray(values, dtype=complex)
    lo, hi = map(float, window)
    clipped = False
    h = grid.h
    A = grid.window[1]
    a = grid.alpha_nodes
    full = values * taper(a, A) if use_taper else values
    half = values * taper(a, A / 2) if use_taper else np.where(np.abs(a) <= A / 2, values, 0.0)
    if t_grid is None and grid.uniform:
        half_period = np.pi / grid.d_alpha
        if lo < -half_period:
            raise KernelError(f"window start {lo:.3g} lies outside the FFT range "
                              f"[-{half_period:.3g}, {half_period:.3g}); refine d_alpha")
        if hi >= half_period:
            # the damped kernel is taken as decayed past the FFT range (zero tail)
            hi, clipped = half_period * (1 - 1e-12), True
        t, S = _fft_sum(full, grid)
        # one lattice point past each end so the window itself is covered
        i0 = max(int(np.searchsorted(t, lo, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(t, hi, side="left")) + 1, t.size)
        keep = slice(i0, i1)
        t, S = t[keep], S[keep]
        if half_check:
            S2 = _fft_sum(half, grid)[1][keep]
    else:
        t = np.asarray(t_grid if t_grid is not None else np.linspace(lo, hi, 2001), float)
        S = _direct_sum(full, grid, t)
        if half_check:
            S2 = _direct_sum(half, grid, t)
    damp = np.exp(-h * t) / (2 * np.pi)
    K = S * damp
    re = K.real
    scale = float(np.max(np.abs(re), initial=0.0))
    imag = float(np.max(np.abs(K.imag), initial=0.0)) / scale if scale > 0 else 0.0
    if clipped and re.size and abs(re[-1]) > 1e-8 * scale:
        warnings.warn(f"kernel not decayed at the FFT range end t={t[-1]:.3g} "
                      f"(|K| = {abs(re[-1]):.2e}); refine d_alpha", RuntimeWarning)
    err = np.abs(S - S2) * damp if half_check else np.zeros(t.size)
    return t, re, imag, err


def roundoff_floor(values, grid: ContourGrid, t: float) -> float:
    """Size of rounding noise after multiplying by ``e^{-ht}``."""
    return float(np.exp(-grid.h * t) * np.finfo(float).eps
                 * np.sum(grid.weights * np.abs(values)) / (2 * np.pi)) * 10.0


# ---------------------------------------------------------------------------
# kernel constructors
# ---------------------------------------------------------------------------

def bound_state_sum(bound_states, s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    for kappa, c in bound_states:
        out += c * c * np.exp(-kappa * s)
    return out


def marchenko_kernel_classical(sd: ScatteringData, s_grid=None, window=None,
                               tail_tol: float = 1e-8) -> KernelFunction:
    """``M(s) = sum c_n^2 e^{-kappa_n s} + (1/2pi) int e^{iks} R(k) dk`` on the real axis.

    ``sd`` must hold R on a symmetric real grid.  Uniform grids use the FFT
    (native spacing ``pi/K``); others use a direct trapezoid sum.  If
    ``s_grid`` is given the result is sampled there, otherwise it stays on
    the native grid over ``window``.
    """
    wn = sd.k_samples
    if wn.regime != "real_axis":
        raise ValueError("classical synthesis needs real-axis samples")
    k = wn.k.real
    o = np.argsort(k)
    k, R = k[o], sd.R[o]
    if not np.allclose(k, -k[::-1], rtol=0, atol=1e-10 * max(1.0, abs(k[-1]))):
        raise ValueError("R must be sampled on a symmetric real grid")
    dk = np.diff(k)
    uniform = bool(np.allclose(dk, dk[0], rtol=1e-9))
    if window is None:
        window = (float(np.min(s_grid)), float(np.max(s_grid))) if s_grid is not None else (0.0, 20.0)
    smax = max(abs(window[0]), abs(window[1]))
    if float(np.max(dk)) > np.pi / smax:
        raise KernelError(f"k spacing {np.max(dk):.3g} too coarse for |s| up to {smax:.3g}")
    if uniform:
        # the spacing from the end points; single differences lose digits on wide grids
        step = (k[-1] - k[0]) / (k.size - 1)
        grid = ContourGrid(0.0, k, np.full(k.size, step), (k[0] - step / 2, k[-1] + step / 2), True)
        t_grid = None
    else:
        w = np.empty_like(k)
        w[1:-1] = 0.5 * (k[2:] - k[:-2])
        w[0], w[-1] = 0.5 * dk[0], 0.5 * dk[-1]
        grid = ContourGrid(0.0, k, w, (k[0], -k[0]), False)
        t_grid = s_grid
    t, v, imag, err = fourier_synthesis(R, grid, window, t_grid=t_grid)
    tail = float(np.max(err, initial=0.0))
    if tail > tail_tol:
        warnings.warn(f"real-axis k range may be short: error estimate {tail:.2e}", RuntimeWarning)
    v = v + bound_state_sum(sd.bound_states, t)
    kf = KernelFunction(t, v, "classical_sum", fit_decay(t, v), imag, err,
                        meta={"tail_estimate": tail, "n_bound_states": len(sd.bound_states)})
    if s_grid is not None and uniform:
        kf = kf.resample(s_grid)
    return kf


def _as_samples(R_contour, grid) -> ContourSamples:
    if isinstance(R_contour, ContourSamples):
        return R_contour
    if grid is None:
        raise ValueError("a ContourGrid is required with raw sample values")
    return ContourSamples(grid, np.asarray(R_contour, dtype=complex), "R")


def marchenko_kernel_contour(R_contour, grid: ContourGrid | None = None, s_grid=None,
                             window=None) -> KernelFunction:
    """``M(s) = (1/2pi) int_{R+ih} e^{iks} R(k) dk``; bound states are implicit."""
    smp = _as_samples(R_contour, grid)
    if window is None:
        window = (float(np.min(s_grid)), float(np.max(s_grid))) if s_grid is not None else (0.0, 20.0)
    t_grid = s_grid if not smp.grid.uniform else None
    t, v, imag, err = fourier_synthesis(smp.values, smp.grid, window, t_grid=t_grid)
    kf = KernelFunction(t, v, "contour_integral", fit_decay(t, v), imag, err,
                        meta={"h": smp.grid.h})
    if s_grid is not None and smp.grid.uniform:
        kf = kf.resample(s_grid)
    return kf


class _KernelCache:
    """Synthesized base kernels keyed by samples and window (thread-safe)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict = {}

    def get(self, key, owner, build):
        # ``owner`` is kept alive with the entry so an id() in ``key`` cannot be reused
        with self._lock:
            hit = self._data.get(key)
        if hit is not None and hit[0] is owner:
            return hit[1]
        val = build()
        with self._lock:
            self._data[key] = (owner, val)
            return val

    def clear(self):
        with self._lock:
            self._data.clear()


KERNEL_CACHE = _KernelCache()


def g_base_kernel(G_contour, grid: ContourGrid | None = None, t_window=(-4.0, 16.0),
                  noise_tol: float = 1e-6, err_tol: float = 1e-4) -> KernelFunction:
    """``G(t) = (1/2pi) int_{R+ih} e^{ikt} G(k) dk`` on ``t_window`` (cached).

    Refuses when rounding noise amplified by ``e^{-ht}`` at the window start
    exceeds ``noise_tol`` or the halved-window estimate exceeds ``err_tol``.
    """
    smp = _as_samples(G_contour, grid)
    lo, hi = map(float, t_window)
    key = (id(smp), id(smp.values), smp.grid.h, lo, hi)

    def build():
        floor = roundoff_floor(smp.values, smp.grid, lo)
        if floor > noise_tol:
            raise KernelWindowError(
                f"e^(-h t) at t={lo:.3g} amplifies rounding to {floor:.2e} > {noise_tol:.1e}; "
                "reduce |x| or the contour height")
        t, v, imag, err = fourier_synthesis(smp.values, smp.grid, (lo, hi),
                                            t_grid=None if smp.grid.uniform else
                                            np.linspace(lo, hi, 4001))
        worst = float(np.max(err, initial=0.0))
        if worst > err_tol:
            raise KernelWindowError(
                f"alpha-window error estimate {worst:.2e} > {err_tol:.1e} on t in [{lo:.3g}, {hi:.3g}]; "
                "widen the contour window or reduce |x|")
        return KernelFunction(t, v, "contour_integral", fit_decay(t, v), imag, err,
                              meta={"h": smp.grid.h, "roundoff_floor": floor})

    kf = KERNEL_CACHE.get(key, smp, build)
    kf.meta.setdefault("samples", smp)
    return kf


def g_kernel(G_contour, grid: ContourGrid | None, x: float, s_max: float = 12.0,
             **kw) -> KernelFunction:
    """Partial-data kernel ``G_x(s) = (1/2pi) int e^{ik(s+2x)} G(k) dk`` for s in [0, s_max]."""
    base = g_base_kernel(G_contour, grid, (2 * x, s_max + 2 * x), **kw)
    out = shift_kernel(base, x)
    out.provenance = f"g_contour({x:.17g})"
    return out
