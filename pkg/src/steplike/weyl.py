"""Titchmarsh-Weyl m-functions and the coefficients expressed through them.

Conventions: ``m_+ = Psi_+'/Psi_+`` at ``0+`` with ``Psi_+`` the Jost
solution ``e^{ikx}`` at ``+inf``, and ``m_- = -Psi_-'/Psi_-`` at ``0-`` with
``Psi_-`` the Weyl solution decaying at ``-inf``.  Both equal ``ik`` for the
zero potential.  Only ``R_-``, ``L_+``, ``T_+`` and
``G = R - R_+`` are continued to the contour; ``R`` and ``R_+`` themselves
are evaluated on the real axis, where their conjugates are taken as values
at ``-k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import io
from .forward import WaveNumber, as_wavenumber
from .potential import INF, Potential, PotentialError, contour_params, integrate
from .propagate import propagate, weyl_branch


class WeylError(RuntimeError):
    """Singular sample or unresolved Riccati singularity."""


@dataclass
class MSample:
    """m-function values and ``Psi_+(0, k)`` at a set of wave numbers."""

    k: WaveNumber
    m_minus: np.ndarray
    m_plus: np.ndarray
    psi_plus_at_0: np.ndarray

    def __getitem__(self, idx) -> "MSample":
        k = self.k.k[idx]
        wn = WaveNumber(k, self.k.regime, self.k.h)
        return MSample(wn, self.m_minus[idx], self.m_plus[idx], self.psi_plus_at_0[idx])

    def to_csv(self, path):
        k = self.k.k
        io.write_csv(path, {"re_k": k.real, "im_k": k.imag, "re_m_minus": self.m_minus.real,
                            "im_m_minus": self.m_minus.imag, "re_m_plus": self.m_plus.real,
                            "im_m_plus": self.m_plus.imag, "re_psi0": self.psi_plus_at_0.real,
                            "im_psi0": self.psi_plus_at_0.imag})


def minus_start(q: Potential, depth: float = 5.0, rel: float = 1e-10) -> tuple[float, float]:
    """Starting point ``-X`` for the m_- integration and the local constant there."""
    qm = q.minus()
    first = qm.pieces[0]
    if first.shape.constant:
        return float(first.x_hi), float(first.shape.C)
    lo = first.effective(rel)[0] - depth
    lo = min(lo, first.x_hi - depth)
    return lo, float(qm(lo))


def m_minus(q: Potential, k, depth: float = 5.0):
    """``m_-(k^2)`` by propagating the decaying Weyl solution from ``-X`` to 0."""
    wn = as_wavenumber(k)
    if np.any(wn.k.imag < 0):
        raise ValueError("need Im k >= 0")
    X, C = minus_start(q, depth)
    lam = weyl_branch(wn.k, C)
    if X >= 0.0:
        out = 1j * lam
    else:
        u, up, _ = propagate(wn.k, q.minus(), X, 0.0, 1.0, -1j * lam)
        _check_regular(u, up)
        out = -up / u
    return out[0] if np.ndim(k) == 0 and not isinstance(k, WaveNumber) else out


def plus_end(q: Potential) -> float:
    """Right end of the numerical support of q_+ (0 if q_+ vanishes)."""
    qp = q.plus()
    last = qp.pieces[-1]
    if last.shape.constant and not last.is_zero:
        raise PotentialError("q_+ has a constant non-zero tail")
    lo, hi = qp.support()
    if not math.isfinite(hi):
        raise PotentialError("q_+ has no numerical support")
    return max(hi, 0.0) if lo < hi else 0.0


def m_plus(q: Potential, k):
    """``(m_+(k^2), Psi_+(0, k))`` from the Jost solution ``e^{ikx}`` at ``+X``."""
    wn = as_wavenumber(k)
    if np.any(wn.k.imag < 0):
        raise ValueError("need Im k >= 0")
    if np.any(wn.k == 0):
        raise WeylError("k = 0 is excluded")
    X = plus_end(q)
    ik = 1j * wn.k
    if X == 0.0:
        mp, psi = ik, np.ones_like(ik)
    else:
        u, up, ln = propagate(wn.k, q.plus(), X, 0.0, 1.0, ik)
        _check_regular(u, up)
        mp = up / u
        psi = u * np.exp(ln + ik * X)
    if np.ndim(k) == 0 and not isinstance(k, WaveNumber):
        return mp[0], psi[0]
    return mp, psi


def _check_regular(u, up):
    if np.any(np.abs(u) < 1e-14 * np.abs(up)):
        raise WeylError("solution vanishes at 0 (Dirichlet eigenvalue): m is singular here")


def m_functions(q: Potential, k, depth: float = 5.0) -> MSample:
    wn = as_wavenumber(k)
    mm = m_minus(q, wn, depth)
    mp, psi = m_plus(q, wn)
    return MSample(wn, mm, mp, psi)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

@dataclass
class Coefficients:
    R: np.ndarray | None
    R_plus: np.ndarray | None
    R_minus: np.ndarray
    L_plus: np.ndarray
    T_plus: np.ndarray

    def as_tuple(self):
        return self.R, self.R_plus, self.R_minus, self.L_plus, self.T_plus


def _mirror_index(k: np.ndarray) -> np.ndarray:
    order = np.argsort(k.real)
    j = np.searchsorted(k.real[order], -k.real)
    j = np.clip(j, 0, k.size - 1)
    idx = order[j]
    if np.any(np.abs(k[idx] + k) > 1e-12 * np.maximum(1, np.abs(k))):
        raise ValueError("real-axis sample grid is not symmetric; pass mirror samples")
    return idx


def _guard(den, what):
    if np.any(np.abs(den) < 1e-12):
        raise WeylError(f"singular sample: {what} below 1e-12")


def _basic(sample: MSample):
    ik = 1j * sample.k.k
    mm, mp, psi = sample.m_minus, sample.m_plus, sample.psi_plus_at_0
    _guard(ik + mm, "|ik + m_-|")
    _guard(ik + mp, "|ik + m_+|")
    Rm = (ik - mm) / (ik + mm)
    Lp = (ik - mp) / (ik + mp)
    Tp = 2 * ik / ((ik + mp) * psi)
    return Rm, Lp, Tp


def coeffs_from_m(sample: MSample, mirror: MSample | None = None) -> Coefficients:
    """``R, R_+, R_-, L_+, T_+`` from the m-functions.

    On the real axis the values at ``-k`` stand in for conjugates; they are
    taken from ``mirror`` or, for symmetric grids, from the sample itself.
    Off the real axis ``R`` and ``R_+`` are ``None``.
    """
    k = sample.k.k
    ik = 1j * k
    mm, mp, psi = sample.m_minus, sample.m_plus, sample.psi_plus_at_0
    Rm, Lp, Tp = _basic(sample)
    R = Rp = None
    if sample.k.regime == "real_axis":
        if mirror is None:
            idx = _mirror_index(k)
            mpc, psic = mp[idx], psi[idx]
        else:
            if np.any(np.abs(mirror.k.k + k) > 1e-12 * np.maximum(1, np.abs(k))):
                raise ValueError("mirror samples must sit at -k")
            mpc, psic = mirror.m_plus, mirror.psi_plus_at_0
        _guard(mm + mp, "|m_- + m_+|")
        ratio = psic / psi
        R = -(mm + mpc) / (mm + mp) * ratio
        Rp = -(mpc + ik) / (mp + ik) * ratio
    return Coefficients(R, Rp, Rm, Lp, Tp)


def g_of_k(sample: MSample) -> np.ndarray:
    """``G = T_+^2 R_- / (1 - L_+ R_-)``, the difference ``R - R_+``."""
    Rm, Lp, Tp = _basic(sample)
    den = 1 - Lp * Rm
    _guard(den, "|1 - L_+ R_-|")
    return Tp**2 * Rm / den


def g_of_k_alt(sample: MSample) -> np.ndarray:
    """Second route: ``G = T_+ (ik - m_-)/(m_+ + m_-) g`` with ``g = T_+/(1 + L_+)``."""
    ik = 1j * sample.k.k
    _, Lp, Tp = _basic(sample)
    _guard(sample.m_plus + sample.m_minus, "|m_+ + m_-|")
    g = Tp / (1 + Lp)
    return Tp * (ik - sample.m_minus) / (sample.m_plus + sample.m_minus) * g


def G_contour(q: Potential, k, depth: float = 5.0) -> np.ndarray:
    """``G(k)`` for a potential, straight from the m-functions."""
    return g_of_k(m_functions(q, k, depth))


def reflection_real(q: Potential, k, depth: float = 5.0) -> Coefficients:
    """All five coefficients on a real grid (values at -k computed as well)."""
    wn = as_wavenumber(k)
    if wn.regime != "real_axis":
        raise ValueError("R and R_+ exist on the real axis only")
    s = m_functions(q, wn, depth)
    neg = m_functions(q, WaveNumber.real(-wn.k.real), depth)
    return coeffs_from_m(s, neg)


# ---------------------------------------------------------------------------
# A-amplitude diagnostic
# ---------------------------------------------------------------------------

@dataclass
class AAmplitudeCheck:
    grid: np.ndarray
    A_approx: np.ndarray
    q_values: np.ndarray
    bound: np.ndarray
    h: float
    gamma: float
    transform_error: np.ndarray

    @property
    def max_violation(self) -> float:
        """Largest excess of ``|A - q|`` over the bound plus the transform error."""
        excess = np.abs(self.A_approx - self.q_values) - self.bound - self.transform_error
        return float(np.max(excess, initial=-INF))

    @property
    def satisfied(self) -> bool:
        return self.max_violation <= 0.0


def a_amplitude_check(q: Potential, side: str = "-", grid=None, h: float | None = None,
                      alpha_max: float = 4000.0, d_alpha: float = 0.05,
                      gap: float = 0.05) -> AAmplitudeCheck:
    """Recover ``A_-`` (or ``A_+``) by inverting ``ik - m(k^2)`` along ``R + ih``.

    ``ik - m_- = int_{-inf}^0 e^{-2ikx} A_-(x) dx`` gives
    ``A_-(x) = e^{-2hx}/pi int e^{2i alpha x}(ik - m_-)(alpha + ih) d alpha``.
    The grid avoids a ``gap`` neighbourhood of each breakpoint, where the
    truncated transform rings.  The transform error is estimated by repeating
    the inversion on half the alpha window (sup over the grid).
    """
    if side not in ("-", "+"):
        raise ValueError("side must be '-' or '+'")
    cp = contour_params(q)
    gamma = cp.gamma
    if h is None:
        h = gamma + 1.0
    if not h > gamma:
        raise ValueError("need h > gamma")
    sgn = -1.0 if side == "-" else 1.0
    if grid is None:
        grid = sgn * np.linspace(0.02, 3.0, 150)
        br = np.asarray(q.breakpoints)
        if br.size:
            grid = grid[np.min(np.abs(grid[:, None] - br[None, :]), axis=1) > gap]
    grid = np.sort(np.asarray(grid, dtype=float))
    n = int(round(alpha_max / d_alpha))
    alpha = (np.arange(-n, n) + 0.5) * d_alpha
    wn = WaveNumber.contour(alpha, h)
    ik = 1j * wn.k
    f = ik - (m_minus(q, wn) if side == "-" else m_plus(q, wn)[0])
    # (1/pi) sum_j e^{-2 sgn i alpha_j x} f_j d_alpha, side '+' flips the phase sign
    phase = np.exp(-2j * sgn * np.outer(grid, alpha))
    damp = d_alpha / math.pi * np.exp(2 * sgn * h * grid)
    A = (phase @ f).real * damp
    inner = np.abs(alpha) <= alpha_max / 2
    A_half = (phase[:, inner] @ f[inner]).real * damp
    qs = q(grid)
    cum = np.array([integrate(q, lambda v, x: np.abs(v), min(0.0, x), max(0.0, x)) for x in grid])
    bound = cum**2 * np.exp(2 * gamma * np.abs(grid))
    err = np.full(grid.shape, float(np.max(np.abs(A - A_half), initial=0.0)))
    return AAmplitudeCheck(grid, A, qs, bound, h, gamma, err)


# ---------------------------------------------------------------------------
# truncation differences
# ---------------------------------------------------------------------------

@dataclass
class TruncationDelta:
    """``G`` of q, ``G~`` of the truncation ``q chi_[-a, inf)`` and their difference."""

    k: WaveNumber
    a: float
    G: np.ndarray
    G_trunc: np.ndarray
    delta: np.ndarray


def truncation_delta_G(q: Potential, a: float, k, depth: float = 5.0) -> TruncationDelta:
    """``delta G = G - G~`` without cancellation.

    Both potentials agree on ``[-a, 0]``, so ``m_-`` of either is a Moebius
    image of its value at ``-a`` under the same transfer matrix.  The
    difference of two Moebius images factors through the difference of the
    arguments, which keeps ``delta G`` accurate to relative precision long
    after ``G - G~`` itself is lost in rounding.
    """
    if not a > 0:
        raise ValueError("truncation length must be positive")
    wn = as_wavenumber(k)
    kk = wn.k
    if np.any(kk.imag < 0):
        raise ValueError("need Im k >= 0")
    ik = 1j * kk
    qm = q.minus()
    X, C = minus_start(q, depth)
    # m at -a for q (Weyl solution) and for the truncation (free to the left)
    if X >= -a:
        mu = 1j * weyl_branch(kk, C)
    else:
        lam = weyl_branch(kk, C)
        u, up, _ = propagate(kk, qm, X, -a, 1.0, -1j * lam)
        _check_regular(u, up)
        mu = -up / u
    mu_t = 1j * weyl_branch(kk, 0.0)
    u1, u1p, l1 = propagate(kk, qm, -a, 0.0, 1.0, 0.0)
    u2, u2p, l2 = propagate(kk, qm, -a, 0.0, 0.0, 1.0)
    scale = np.exp(l2 - l1)
    r, r_t = mu * scale, mu_t * scale
    D, D_t = u1 - r * u2, u1 - r_t * u2
    _check_regular(D, u1p - r * u2p)
    _check_regular(D_t, u1p - r_t * u2p)
    m, m_t = -(u1p - r * u2p) / D, -(u1p - r_t * u2p) / D_t
    dm = (mu - mu_t) * scale * (u1 * u2p - u1p * u2) / (D * D_t)
    mp, psi = m_plus(q, wn)
    base = MSample(wn, m, mp, psi)
    Rm, Lp, Tp = _basic(base)
    Rm_t, _, _ = _basic(MSample(wn, m_t, mp, psi))
    dRm = -2 * ik * dm / ((ik + m) * (ik + m_t))
    den, den_t = 1 - Lp * Rm, 1 - Lp * Rm_t
    _guard(den, "|1 - L_+ R_-|")
    _guard(den_t, "|1 - L_+ R_-|")
    G = Tp**2 * Rm / den
    G_t = Tp**2 * Rm_t / den_t
    dG = Tp**2 * dRm / (den * den_t)
    return TruncationDelta(wn, float(a), G, G_t, dG)
