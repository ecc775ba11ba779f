"""Direct scattering: Jost solutions, T/L/R, bound states and norming constants.

Two independent routes to the transmission coefficient of q_+ exist here.
:func:`transmission_plus` solves the Volterra equation for
``y_+(x, k) = exp(-ikx) Psi_+(x, k)`` on Gauss-Legendre panels, while
:func:`scatter` matches plane waves after propagating the ODE across the
support.  The m-function route lives in :mod:`steplike.weyl`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from . import io
from .potential import INF, Potential, PotentialError, classify, evaluate, gl_nodes
from .propagate import propagate, propagate_path, weyl_branch


class ScatteringError(RuntimeError):
    """Numerical failure in a forward solve (pole proximity, bad window)."""


# ---------------------------------------------------------------------------
# wave numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveNumber:
    """Samples of the spectral variable with their regime.

    ``regime`` is ``"real_axis"``, ``"contour"`` (constant ``Im k = h > 0``)
    or ``"upper"`` for scattered points with ``Im k > 0``.
    """

    k: np.ndarray
    regime: str
    h: float = 0.0

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k, dtype=complex))
        object.__setattr__(self, "k", k)
        if self.regime == "real_axis" and np.any(k.imag != 0):
            raise ValueError("real_axis samples must be real")
        if self.regime == "contour":
            if not self.h > 0 or np.any(np.abs(k.imag - self.h) > 1e-12 * max(1.0, self.h)):
                raise ValueError("contour samples need Im k = h > 0")
        if self.regime == "upper" and np.any(k.imag <= 0):
            raise ValueError("upper samples need Im k > 0")

    @classmethod
    def real(cls, k) -> "WaveNumber":
        return cls(np.asarray(k, dtype=float).astype(complex), "real_axis", 0.0)

    @classmethod
    def contour(cls, alpha, h: float) -> "WaveNumber":
        return cls(np.asarray(alpha, dtype=float) + 1j * h, "contour", float(h))

    @property
    def alpha(self) -> np.ndarray:
        return self.k.real

    def __len__(self):
        return self.k.size


def as_wavenumber(k) -> WaveNumber:
    """Coerce scalars/arrays to :class:`WaveNumber`, inferring the regime."""
    if isinstance(k, WaveNumber):
        return k
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    if np.all(k.imag == 0):
        return WaveNumber(k, "real_axis")
    h = float(k.imag[0])
    if h > 0 and np.all(k.imag == h):
        return WaveNumber(k, "contour", h)
    return WaveNumber(k, "upper")


def _scalar_out(wn_in, arr):
    return arr[0] if np.ndim(wn_in) == 0 and not isinstance(wn_in, WaveNumber) else arr


# ---------------------------------------------------------------------------
# supports
# ---------------------------------------------------------------------------

def numerical_support(q: Potential) -> tuple[float, float]:
    """Support of q, cutting decaying shapes where they are negligible.

    Raises if q has a non-zero constant tail (not short range).
    """
    for pc in (q.pieces[0], q.pieces[-1]):
        if pc.shape.constant and not pc.is_zero:
            raise PotentialError("potential has a constant non-zero tail")
    lo, hi = q.support()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise PotentialError("potential has no numerical support")
    return lo, hi


def _window(q: Potential, window) -> tuple[float, float]:
    lo, hi = numerical_support(q)
    if window is None:
        if lo == hi:
            return (0.0, 0.0)
        return lo, hi
    a, b = map(float, window)
    if lo < hi and (lo < a - 1e-12 or hi > b + 1e-12):
        raise ScatteringError(f"window [{a}, {b}] does not contain the support [{lo}, {hi}]")
    return a, b


# ---------------------------------------------------------------------------
# plane-wave matching across a window
# ---------------------------------------------------------------------------

def scatter(q: Potential, k, window=None):
    """``(T, L, R)`` of a compactly supported q for any k with ``Im k >= 0``.

    ``T f_+ = e^{ikx} + L e^{-ikx}`` to the left of the window and
    ``T f_- = e^{-ikx} + R e^{ikx}`` to the right.  Also returns the
    matching condition number.
    """
    wn = as_wavenumber(k)
    kk = wn.k
    if np.any(kk == 0):
        raise ScatteringError("k = 0 is excluded")
    a, b = _window(q, window)
    ik = 1j * kk
    # right Jost solution e^{ikx} from b down to a
    u, up, ln = propagate(kk, q, b, a, 1.0, ik)
    off = ln + ik * b
    P = 0.5 * (u + up / ik) * np.exp(off - ik * a)
    Q = 0.5 * (u - up / ik) * np.exp(off + ik * a)
    # left Jost solution e^{-ikx} from a up to b
    u2, up2, ln2 = propagate(kk, q, a, b, 1.0, -ik)
    off2 = ln2 - ik * a
    A = 0.5 * (u2 - up2 / ik) * np.exp(off2 + ik * b)
    B = 0.5 * (u2 + up2 / ik) * np.exp(off2 - ik * b)
    cond = (np.abs(P) + np.abs(Q)) / np.abs(P)
    T = 1.0 / P
    return T, Q / P, B / A, cond


def scatter_real(q: Potential, k, window=None):
    """Transmission, left and right reflection on the real axis."""
    wn = as_wavenumber(k)
    if wn.regime != "real_axis":
        raise ValueError("scatter_real needs real k")
    T, L, R, _ = scatter(q, wn, window)
    return _scalar_out(k, T), _scalar_out(k, L), _scalar_out(k, R)


def scatter_contour(q: Potential, k, window=None, cond_max: float = 1e12):
    """``(T, L, R)`` of a compactly supported q on ``R + ih``."""
    wn = as_wavenumber(k)
    if wn.regime != "contour":
        raise ValueError("scatter_contour needs k on R + ih")
    T, L, R, cond = scatter(q, wn, window)
    worst = float(np.max(cond))
    if not np.isfinite(worst) or worst > cond_max:
        raise ScatteringError(f"matching near-singular, condition number {worst:.3e}")
    return _scalar_out(k, T), _scalar_out(k, L), _scalar_out(k, R)


# ---------------------------------------------------------------------------
# Volterra route for y_+
# ---------------------------------------------------------------------------

def D_kernel(k, y):
    """``D_k(y) = (exp(2iky) - 1)/(2ik)``, stable for small k, ``D_0(y) = y``."""
    k = np.asarray(k, dtype=complex)
    y = np.asarray(y, dtype=float)
    return y * np.exp(1j * k * y) * np.sinc(k * y / np.pi)


def _lagrange(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolation matrix from values at ``nodes`` to values at ``x``."""
    n = nodes.size
    wb = np.array([1.0 / np.prod(nodes[j] - np.delete(nodes, j)) for j in range(n)])
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff[exact] = 1.0
    M = wb / diff
    M /= M.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    M[rows] = exact[rows].astype(float)
    return M


class _PanelRule:
    """Reference data for integrals from each Gauss node to the panel end."""

    def __init__(self, order: int):
        t, w = leggauss(order)
        self.t, self.w = t, w
        self.delta = np.empty((order, order))
        self.omega = np.empty((order, order))
        self.lam = np.empty((order, order, order))
        for i, ti in enumerate(t):
            s = ti + (1 - ti) * (t + 1) / 2
            self.delta[i] = s - ti
            self.omega[i] = (1 - ti) / 2 * w
            self.lam[i] = _lagrange(t, s)


_RULES: dict[int, _PanelRule] = {}


def _rule(order):
    if order not in _RULES:
        _RULES[order] = _PanelRule(order)
    return _RULES[order]


@dataclass
class JostProfile:
    """Solution ``y_+`` of the Volterra equation on a panel grid."""

    grid: np.ndarray
    y: np.ndarray
    k: WaveNumber
    K_estimate: np.ndarray
    iterations: int
    nodes: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)
    y_nodes: np.ndarray = field(repr=False, default=None)
    q_nodes: np.ndarray = field(repr=False, default=None)


def _panel_edges(q: Potential, X: float, kmax: float, grid=None) -> np.ndarray:
    if grid is not None:
        g = np.unique(np.concatenate([np.asarray(grid, float), [0.0, X]]))
        g = g[(g >= 0) & (g <= X)]
        br = [b for b in q.breakpoints if 0 < b < X]
        return np.unique(np.concatenate([g, br]))
    width = min(0.25, 4.0 / max(kmax, 1e-12))
    pts = np.unique([0.0, X] + [b for b in q.breakpoints if 0 < b < X])
    edges = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        edges.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(edges)


def jost_y_plus(q_plus: Potential, k, grid=None, order: int = 16, tol: float = 1e-12,
                max_iter: int = 200) -> JostProfile:
    """Solve ``y(x) = 1 + int_x^inf D_k(t - x) q_+(t) y(t) dt``.

    Panels are aligned with the breakpoints of q_+ (and with ``grid`` if
    given).  The Neumann iteration marches backwards from the right end of
    the numerical support, where ``y = 1``.  ``y`` is reported at the panel
    edges; the Gauss-node values are kept for quadrature.
    """
    wn = as_wavenumber(k)
    if np.any(wn.k.imag < 0):
        raise ValueError("need Im k >= 0")
    qp = q_plus.plus()
    lo, hi = numerical_support(qp)
    X = max(hi, 0.0)
    kk = wn.k[:, None]
    edges = _panel_edges(qp, X, float(np.max(np.abs(wn.k))), grid)
    if edges.size < 2:
        edges = np.array([0.0, max(X, 1.0)])
    rule = _rule(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * rule.t          # (P, p)
    wq = half[:, None] * rule.w
    qn = evaluate(qp, x)
    nk, P, p = wn.k.size, a.size, order
    # in-panel operator S[k, P, i, j]
    Dsub = D_kernel(kk[:, :, None, None], (half[:, None, None] * rule.delta)[None])
    S = np.einsum("kPil,il,ilj->kPij", Dsub * half[None, :, None, None], rule.omega, rule.lam)
    D_from_a = D_kernel(kk[:, :, None], (x - a[:, None])[None]) * wq[None]      # (k, P, p)
    Dbx = D_kernel(kk[:, :, None], (b[:, None] - x)[None])                      # (k, P, p)
    Ebx = np.exp(2j * kk[:, :, None] * (b[:, None] - x)[None])
    Dba = D_kernel(kk, (b - a)[None])
    Eba = np.exp(2j * kk * (b - a)[None])

    y = np.ones((nk, P, p), complex)
    it = 0
    for it in range(1, max_iter + 1):
        f = qn[None] * y
        JD = np.zeros((nk, P + 1), complex)
        J1 = np.zeros((nk, P + 1), complex)
        inD = np.sum(D_from_a * f, axis=2)
        in1 = np.sum(wq[None] * f, axis=2)
        for j in range(P - 1, -1, -1):
            JD[:, j] = inD[:, j] + Eba[:, j] * JD[:, j + 1] + Dba[:, j] * J1[:, j + 1]
            J1[:, j] = in1[:, j] + J1[:, j + 1]
        ynew = 1.0 + np.einsum("kPij,kPj->kPi", S, f) \
            + Ebx * JD[:, 1:, None] + Dbx * J1[:, 1:, None]
        diff = float(np.max(np.abs(ynew - y)))
        y = ynew
        if diff < tol * max(1.0, float(np.max(np.abs(y)))):
            break
    else:
        raise ScatteringError(f"Volterra iteration did not converge in {max_iter} iterations")
    y_edges = 1.0 + JD
    xs = x.reshape(-1)
    Kest = np.max(np.abs(y).reshape(nk, -1) / (1 + np.abs(xs)), axis=1)
    squeeze = np.ndim(k) == 0 and not isinstance(k, WaveNumber)
    return JostProfile(edges, y_edges[0] if squeeze else y_edges, wn, Kest, it,
                       xs, wq.reshape(-1), y.reshape(nk, -1), qn.reshape(-1))


def transmission_plus(q_plus: Potential, k, profile: JostProfile | None = None,
                      pole_tol: float = 1e-10):
    """``T_+`` from ``1/T_+ = 1 - (1/2ik) int q_+ y_+ dx``."""
    wn = as_wavenumber(k)
    if np.any(wn.k == 0):
        raise ScatteringError("k = 0 is excluded")
    prof = profile or jost_y_plus(q_plus, wn)
    integral = prof.y_nodes @ (prof.weights * prof.q_nodes)
    inv = 1.0 - integral / (2j * wn.k)
    if np.any(np.abs(inv) < pole_tol):
        raise ScatteringError("k is at or near a pole of T_+")
    return _scalar_out(k, 1.0 / inv)


# ---------------------------------------------------------------------------
# bound states
# ---------------------------------------------------------------------------

def _wronskian_sign(q: Potential, kappa: np.ndarray, a: float, b: float) -> np.ndarray:
    """Real quantity vanishing exactly at bound states ``-kappa^2``.

    The decaying solution from the right is propagated to ``a`` and its
    log-derivative compared with the decaying one of the free left tail.
    """
    kk = 1j * np.asarray(kappa, dtype=float)
    u, up, _ = propagate(kk, q, b, a, 1.0, -kappa)
    return np.real(up - kappa * u)


def bound_states(q: Potential, n_scan: int = 400, kappa_max: float | None = None):
    """Bound states ``(kappa_n, c_n)`` of a short-range q, sorted by kappa.

    Zeros of the Wronskian of the two decaying solutions are bracketed on a
    uniform scan of ``(0, kappa_max]`` and refined by Brent's method.  The
    norming constant comes from normalizing the eigenfunction that behaves
    like ``exp(-kappa x)`` at ``+inf``.
    """
    a, b = numerical_support(q)
    if a == b:
        return []
    if kappa_max is None:
        l1 = _l1(q)
        peak = max((pc.shape.maxabs() for pc in q.pieces if not pc.is_zero), default=0.0)
        kappa_max = min(1.005 * l1, math.sqrt(peak)) if peak > 0 else 0.0
    if kappa_max <= 0:
        return []
    ks = kappa_max * np.arange(1, n_scan + 1) / n_scan
    f = _wronskian_sign(q, ks, a, b)
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    if idx.size == 0:
        return []
    g = lambda kp: float(_wronskian_sign(q, np.array([kp]), a, b)[0])
    kappas = [brentq(g, ks[i], ks[i + 1], xtol=1e-14, rtol=1e-15, maxiter=200) for i in idx]
    return [(float(kp), norming_constant(q, float(kp), a, b)) for kp in sorted(kappas)]


def _l1(q: Potential) -> float:
    from .potential import integrate
    return integrate(q, lambda v, x: np.abs(v), -INF, INF)


def norming_constant(q: Potential, kappa: float, a: float | None = None,
                     b: float | None = None, panel: float = 0.05) -> float:
    """``c`` with ``psi / ||psi|| ~ c exp(-kappa x)`` at ``+inf``."""
    if a is None or b is None:
        a, b = numerical_support(q)
    edges = np.unique(np.concatenate([np.linspace(a, b, max(2, int(math.ceil((b - a) / panel)) + 1)),
                                      [x for x in q.breakpoints if a < x < b]]))
    xn, wn = gl_nodes(edges, 16)
    path = np.unique(np.concatenate([xn, edges]))[::-1]
    U, UP, LN = propagate_path(np.array([1j * kappa]), q, path, 1.0, -kappa)
    psi = (U[:, 0] * np.exp(LN[:, 0] - kappa * b)).real
    vals = dict(zip(path, psi))
    inner = float(np.sum(wn * np.array([vals[x] for x in xn]) ** 2))
    right = math.exp(-2 * kappa * b) / (2 * kappa)
    left = vals[path[-1]] ** 2 / (2 * kappa)
    return 1.0 / math.sqrt(inner + right + left)


def bound_states_plus(q_plus: Potential, **kw):
    """Bound states of the half-line part ``q_+`` (zero continuation for x < 0)."""
    return bound_states(q_plus.plus(), **kw)


# ---------------------------------------------------------------------------
# scattering data container
# ---------------------------------------------------------------------------

@dataclass
class ScatteringData:
    """Coefficient samples and discrete spectrum of q or q_+."""

    k_samples: WaveNumber
    T: np.ndarray
    L: np.ndarray
    R: np.ndarray
    bound_states: list
    side: str = "full"

    def to_csv(self, path, bound_path=None):
        k = self.k_samples.k
        io.write_csv(path, {"re_k": k.real, "im_k": k.imag, "re_T": self.T.real,
                            "im_T": self.T.imag, "re_L": self.L.real, "im_L": self.L.imag,
                            "re_R": self.R.real, "im_R": self.R.imag})
        if bound_path is not None:
            io.write_csv(bound_path, {"kappa": [b[0] for b in self.bound_states],
                                      "c": [b[1] for b in self.bound_states]})

    @classmethod
    def from_csv(cls, path, bound_path=None, side="full") -> "ScatteringData":
        d = io.read_csv(path)
        k = d["re_k"] + 1j * d["im_k"]
        bs = []
        if bound_path is not None and Path(bound_path).exists():
            b = io.read_csv(bound_path)
            bs = list(zip(b["kappa"].tolist(), b["c"].tolist()))
        return cls(as_wavenumber(k), d["re_T"] + 1j * d["im_T"], d["re_L"] + 1j * d["im_L"],
                   d["re_R"] + 1j * d["im_R"], bs, side)


def scattering_data(q: Potential, k, side: str = "full", with_bound_states: bool = True,
                    window=None) -> ScatteringData:
    """Forward-solve q (``side="full"``) or q_+ (``side="plus_only"``)."""
    if side not in ("full", "plus_only"):
        raise ValueError("side must be 'full' or 'plus_only'")
    qq = q.plus() if side == "plus_only" else q
    wn = as_wavenumber(k)
    T, L, R, _ = scatter(qq, wn, window)
    bs = bound_states(qq) if with_bound_states else []
    return ScatteringData(wn, T, L, R, bs, side)


def symmetric_real_grid(dk: float, K: float) -> WaveNumber:
    """Midpoint grid ``(j + 1/2) dk`` symmetric about 0, avoiding k = 0."""
    n = int(round(K / dk))
    half = (np.arange(n) + 0.5) * dk
    return WaveNumber.real(np.concatenate([-half[::-1], half]))

