"""Vectorized propagation of ``(u, u')`` for ``-u'' + q u = k^2 u``.

Every step is a fourth-order Magnus step built from two Gauss samples of q.
On constant pieces the two samples coincide and the step is the exact
exponential, so piecewise-constant potentials are propagated exactly for any
step length.  Smooth pieces are sub-stepped.  States are renormalized after
each step and the discarded log-norm is returned, so solutions growing like
``exp(h |x|)`` on the contour never overflow.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from .potential import Potential, evaluate

SQ3 = math.sqrt(3.0)
_G1, _G2 = 0.5 - SQ3 / 6, 0.5 + SQ3 / 6

# Default sub-step on non-constant pieces.
SMOOTH_STEP = 0.01
# Largest |Re mu| allowed in a single step (keeps cosh finite).
MAX_GROWTH = 20.0


def weyl_branch(k, C):
    """``sqrt(k^2 - C)`` with Im > 0; on the real axis the sign of Re k.

    The real-axis rule is the limit from the upper half plane.
    """
    k = np.asarray(k, dtype=complex)
    lam = np.sqrt(k * k - C + 0j)
    flip = (lam.imag < 0) | ((lam.imag == 0) & (lam.real * k.real < 0))
    return np.where(flip, -lam, lam)


def _sinhc(mu):
    small = np.abs(mu) < 1e-4
    m2 = mu * mu
    safe = np.where(small, 1.0, mu)
    return np.where(small, 1 + m2 / 6 + m2 * m2 / 120, np.sinh(safe) / safe)


def magnus_step(k2, d, q1, q2, u, up):
    """One Magnus-4 step of signed length ``d``; q1, q2 are the Gauss samples."""
    qb = 0.5 * (q1 + q2)
    c = (SQ3 / 12) * d * d * (q1 - q2)
    b = d * (qb - k2)
    mu = np.sqrt(c * c + d * b + 0j)
    ch = np.cosh(mu)
    sh = _sinhc(mu)
    u1 = (ch + sh * c) * u + sh * d * up
    up1 = sh * b * u + (ch - sh * c) * up
    return u1, up1


def _scalar_steps(k2: complex, d: float, q1, q2, u: complex, up: complex):
    """Same steps as :func:`magnus_step` in plain complex arithmetic (one k)."""
    ln = 0.0
    dd = d * d
    for a1, a2 in zip(q1.tolist(), q2.tolist()):
        c = (SQ3 / 12) * dd * (a1 - a2)
        b = d * (0.5 * (a1 + a2) - k2)
        mu = cmath.sqrt(c * c + d * b)
        if abs(mu) < 1e-4:
            m2 = mu * mu
            sh = 1 + m2 / 6 + m2 * m2 / 120
            ch = 1 + m2 / 2 + m2 * m2 / 24
        else:
            sh = cmath.sinh(mu) / mu
            ch = cmath.cosh(mu)
        u, up = (ch + sh * c) * u + sh * d * up, sh * b * u + (ch - sh * c) * up
        nrm = math.hypot(abs(u), abs(up))
        u, up = u / nrm, up / nrm
        ln += math.log(nrm)
    return u, up, ln


def _nodes(p: Potential, x_from: float, x_to: float, extra=()) -> np.ndarray:
    """Sorted (in the direction of travel) path points including breakpoints."""
    lo, hi = min(x_from, x_to), max(x_from, x_to)
    pts = [x_from, x_to] + [b for b in p.breakpoints if lo < b < hi]
    pts += [e for e in extra if lo <= e <= hi]
    pts = np.unique(np.asarray(pts, dtype=float))
    return pts if x_to >= x_from else pts[::-1]


def _is_constant_on(p: Potential, a: float, b: float) -> bool:
    mid = 0.5 * (a + b)
    lows = [pc.x_lo for pc in p.pieces]
    i = int(np.searchsorted(lows, mid, side="right") - 1)
    pc = p.pieces[i]
    return pc.shape.constant and pc.x_lo <= min(a, b) and max(a, b) <= pc.x_hi


def propagate_path(k, p: Potential, path, u, up, smooth_step: float = SMOOTH_STEP):
    """Propagate along the ordered points ``path``; return states at each point.

    ``path`` must contain every breakpoint of q crossed.  Returns arrays of
    shape ``(len(path), nk)`` for u, u' and the accumulated log-norm.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    k2 = k * k
    u = np.broadcast_to(np.asarray(u, dtype=complex), k.shape).copy()
    up = np.broadcast_to(np.asarray(up, dtype=complex), k.shape).copy()
    logn = np.zeros(k.shape)
    U = np.empty((len(path), k.size), complex)
    UP = np.empty_like(U)
    LN = np.empty((len(path), k.size))
    U[0], UP[0], LN[0] = u, up, logn
    for j in range(1, len(path)):
        a, b = float(path[j - 1]), float(path[j])
        length = b - a
        if length == 0.0:
            U[j], UP[j], LN[j] = u, up, logn
            continue
        if _is_constant_on(p, a, b):
            qv = float(evaluate(p, 0.5 * (a + b)))
            growth = abs(length) * float(np.max(np.abs(np.sqrt(qv - k2 + 0j).real)))
            n = max(1, int(math.ceil(growth / MAX_GROWTH)))
            d = length / n
            for _ in range(n):
                u, up = magnus_step(k2, d, qv, qv, u, up)
                nrm = np.sqrt(np.abs(u) ** 2 + np.abs(up) ** 2)
                u, up, logn = u / nrm, up / nrm, logn + np.log(nrm)
        else:
            n = max(1, int(math.ceil(abs(length) / smooth_step)))
            d = length / n
            x0 = a + d * np.arange(n)
            q1 = evaluate(p, x0 + _G1 * d)
            q2 = evaluate(p, x0 + _G2 * d)
            if k.size <= 4:
                for m in range(k.size):
                    u[m], up[m], ln = _scalar_steps(complex(k2[m]), d, q1, q2,
                                                    complex(u[m]), complex(up[m]))
                    logn[m] += ln
            else:
                for i in range(n):
                    u, up = magnus_step(k2, d, q1[i], q2[i], u, up)
                    nrm = np.sqrt(np.abs(u) ** 2 + np.abs(up) ** 2)
                    u, up, logn = u / nrm, up / nrm, logn + np.log(nrm)
        U[j], UP[j], LN[j] = u, up, logn
    return U, UP, LN


def propagate(k, p: Potential, x_from: float, x_to: float, u, up,
              smooth_step: float = SMOOTH_STEP):
    """Propagate from ``x_from`` to ``x_to``; return ``(u, u', log-norm)``."""
    U, UP, LN = propagate_path(k, p, _nodes(p, x_from, x_to), u, up, smooth_step)
    return U[-1], UP[-1], LN[-1]
