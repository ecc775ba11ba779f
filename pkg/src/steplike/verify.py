"""Invariant suites run by ``verify`` scenarios.

Each suite returns :class:`Check` records with the measured value and the
tolerance it was held to.  Suites that do not apply to a potential (for
example unitarity for a q_+ without numerical support) are reported as
skipped rather than passed.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import io
from .forward import (ScatteringData, WaveNumber, bound_states, numerical_support, scatter,
                      scatter_real, symmetric_real_grid, transmission_plus)
from .kernels import (ContourGrid, ContourSamples, g_base_kernel, marchenko_kernel_classical,
                      marchenko_kernel_contour, sample)
from .operators import Quadrature, discretize, trace_report
from .potential import INF, Potential, PotentialError, classify, contour_params
from .propagate import weyl_branch
from .weyl import G_contour, coeffs_from_m, m_functions, m_minus


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    skipped: bool = False
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _check(suite, name, value, tol, detail="") -> Check:
    value = float(value)
    return Check(suite, name, value, float(tol), bool(value <= tol), False, detail)


def _skip(suite, name, why) -> Check:
    return Check(suite, name, float("nan"), float("nan"), True, True, why)


def _q_plus_supported(q: Potential) -> bool:
    try:
        numerical_support(q.plus())
    except PotentialError:
        return False
    return True


def unitarity(q: Potential, knobs: dict) -> list[Check]:
    """``|T_+|^2 + |L_+|^2 = 1`` and ``T_+(-k) = conj T_+(k)`` on 64 real samples."""
    s = "unitarity"
    if not _q_plus_supported(q):
        return [_skip(s, "T_plus_L_plus", "q_+ has no numerical support")]
    kpos = np.linspace(0.05, 20.0, 32)
    k = WaveNumber.real(np.concatenate([-kpos[::-1], kpos]))
    T, L, R = scatter_real(q.plus(), k)
    u = np.abs(np.abs(T) ** 2 + np.abs(L) ** 2 - 1)
    sym = np.abs(T[:32][::-1] - np.conj(T[32:]))
    out = [_check(s, "abs(|T_+|^2+|L_+|^2-1)", u.max(), 1e-6),
           _check(s, "abs(T_+(-k)-conj T_+(k))", sym.max(), 1e-8)]
    try:
        Tf, Lf, Rf = scatter_real(q, k)
        out.append(_check(s, "abs(|T|^2+|R|^2-1) full", np.abs(np.abs(Tf) ** 2 + np.abs(Rf) ** 2 - 1).max(),
                          1e-6))
    except PotentialError:
        out.append(_skip(s, "abs(|T|^2+|R|^2-1) full", "q is not short range on both sides"))
    return out


def bound_state_inequalities(q: Potential, knobs: dict) -> list[Check]:
    """Counting bound ``N <= 1 + int x|q_+|`` and ``sum kappa <= 1.005 int |q_+|``."""
    s = "bound_states"
    if not _q_plus_supported(q):
        return [_skip(s, "counting", "q_+ has no numerical support")]
    qp = q.plus()
    bs = bound_states(qp)
    rep = classify(q)
    n_bound = 1 + rep.l1x_plus
    lt = 1.005 * rep.l1_plus
    kap = sum(b[0] for b in bs)
    return [_check(s, f"N - (1 + int x|q_+|)  [N={len(bs)}]", len(bs) - n_bound, 0.0),
            _check(s, "sum kappa - 1.005 int|q_+|", kap - lt, 0.0)]


def _contour_grid(q: Potential, knobs: dict, h=None) -> ContourGrid:
    c = knobs["contour"]
    if h is None:
        h = contour_params(q, float(c["margin"])).h if c["h"] == "auto" else float(c["h"])
    return ContourGrid.uniform_grid(float(h), float(c["A"]), float(c["d_alpha"]))


def contour_bounds(q: Potential, knobs: dict) -> list[Check]:
    """``|R_-|, |L_+| <= 1/3`` and ``|T_+| <= 2^beta`` on R + ih."""
    s = "contour_bounds"
    cp = contour_params(q, float(knobs["contour"]["margin"]))
    h = cp.h if knobs["contour"]["h"] == "auto" else float(knobs["contour"]["h"])
    a = np.linspace(-200.0, 200.0, 2001)
    c = coeffs_from_m(m_functions(q, WaveNumber.contour(a, h)))
    return [_check(s, "max |R_-| - 1/3", np.abs(c.R_minus).max() - 1 / 3, 0.0),
            _check(s, "max |L_+| - 1/3", np.abs(c.L_plus).max() - 1 / 3, 0.0),
            _check(s, "max |T_+| - 2^beta", np.abs(c.T_plus).max() - 2 ** cp.beta, 0.0,
                   f"h={h:.6g}, beta={cp.beta:.6g}")]


def route_consistency(q: Potential, knobs: dict) -> list[Check]:
    """``T_+`` from the m-functions against the Volterra route; constant ``m_-``."""
    s = "route_consistency"
    out = []
    cp = contour_params(q, float(knobs["contour"]["margin"]))
    k = WaveNumber.contour(np.linspace(-60.0, 60.0, 64), cp.h)
    if _q_plus_supported(q):
        Tm = coeffs_from_m(m_functions(q, k)).T_plus
        Tv = transmission_plus(q.plus(), k)
        out.append(_check(s, "T_+ m-route vs Volterra", np.abs(Tm - Tv).max(), 1e-8))
    else:
        out.append(_skip(s, "T_+ m-route vs Volterra", "q_+ has no numerical support"))
    qm = q.minus()
    left = [p for p in qm.pieces if p.x_lo < 0]
    if len(left) == 1 and left[0].shape.constant:
        C = float(left[0].shape.C)
        ref = 1j * weyl_branch(k.k, C)
        out.append(_check(s, "m_- vs i sqrt(k^2 - C)", np.abs(m_minus(q, k) - ref).max(), 1e-8))
    else:
        out.append(_skip(s, "m_- vs i sqrt(k^2 - C)", "q_- is not constant"))
    return out


def _g_family(q: Potential, knobs: dict, h=None):
    grid = _contour_grid(q, knobs, h)
    return sample(lambda k: G_contour(q, k), grid)


def trace_bound(q: Potential, knobs: dict) -> list[Check]:
    """Nuclear norm of ``G_x`` against ``(1/(4 pi h)) ||G_x||_{L^1}`` at 10 points."""
    s = "trace_bound"
    samples = _g_family(q, knobs)
    x_lo = knobs["reconstruct"].get("x_min")
    x_lo = -1.0 if x_lo is None else min(float(x_lo), 0.0)
    xs = np.linspace(x_lo, 0.0, 10)
    L = knobs["quadrature"]["L"]
    L = 10.0 / samples.grid.h + 2.0 - 2 * x_lo if L == "auto" else float(L)
    quad = Quadrature.gauss(int(knobs["quadrature"]["N"]), L)
    K = g_base_kernel(samples, t_window=(2 * x_lo - 0.5, 2 * L + 0.5))
    worst = -INF
    for x in xs:
        rep = trace_report(discretize(K, quad, x), samples.l1_norm(shift_x=x), samples.grid.h)
        worst = max(worst, rep.nuclear_norm - rep.trace_bound * (1 + rep.slack))
    return [_check(s, "max(nuclear - bound*(1+1e-3)) over 10 x", worst, 0.0)]


def contour_independence(q: Potential, knobs: dict) -> list[Check]:
    """``G_0`` from heights h and 1.3h agree to 1e-7 on [0, s_max]."""
    s = "contour_independence"
    g1 = _g_family(q, knobs)
    g2 = _g_family(q, knobs, 1.3 * g1.grid.h)
    smax = float(knobs["kernels"]["s_max"])
    K1 = g_base_kernel(g1, t_window=(0.0, smax))
    K2 = g_base_kernel(g2, t_window=(0.0, smax))
    t = np.linspace(0.0, smax, 1201)
    return [_check(s, "max |G(h) - G(1.3h)|", np.abs(K1(t) - K2(t)).max(), 1e-7)]


def residue_equivalence(q: Potential, knobs: dict) -> list[Check]:
    """Classical and contour Marchenko kernels of a compact q on s in [0.1, 10]."""
    s = "residue"
    if not q.is_compact():
        return [_skip(s, "classical vs contour", "q is not compactly supported")]
    lo, hi = q.support()
    if lo == hi:
        return [_check(s, "classical vs contour", 0.0, 1e-6, "zero potential")]
    bs = bound_states(q)
    ra = knobs["real_axis"]
    k = symmetric_real_grid(float(ra["dk"]), float(ra["K"]))
    T, L, R = scatter_real(q, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        Mc = marchenko_kernel_classical(ScatteringData(k, T, L, R, bs), window=(0.0, 12.0))
    h = max([b[0] for b in bs], default=0.0) + 0.5
    grid = ContourGrid.uniform_grid(h, float(knobs["contour"]["A"]), 0.05)
    _, _, Rc, _ = scatter(q, grid.k)
    Mh = marchenko_kernel_contour(ContourSamples(grid, Rc, "R"), window=(0.0, 12.0))
    sg = np.linspace(0.1, 10.0, 991)
    return [_check(s, "max |M_classical - M_contour| on [0.1, 10]", np.abs(Mc(sg) - Mh(sg)).max(), 1e-6,
                   f"{len(bs)} bound state(s), h={h:.3g}")]


SUITES = {
    "unitarity": unitarity,
    "bound_states": bound_state_inequalities,
    "contour_bounds": contour_bounds,
    "route_consistency": route_consistency,
    "trace_bound": trace_bound,
    "contour_independence": contour_independence,
    "residue": residue_equivalence,
}


def run_suites(q: Potential, knobs: dict, suites="all") -> list[Check]:
    names = list(SUITES) if suites in ("all", None) else list(suites)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites: {', '.join(unknown)}")
    out: list[Check] = []
    for n in names:
        try:
            out.extend(SUITES[n](q, knobs))
        except Exception as exc:  # a crashing suite is a failed suite
            out.append(Check(n, "suite raised", float("nan"), float("nan"), False, False,
                             f"{type(exc).__name__}: {exc}"))
    return out


def write_report(path, checks: list[Check]):
    io.write_csv(path, {"suite": [c.suite for c in checks], "name": [c.name for c in checks],
                        "value": [c.value for c in checks], "tolerance": [c.tolerance for c in checks],
                        "passed": [c.passed for c in checks], "skipped": [c.skipped for c in checks],
                        "detail": [c.detail for c in checks]})
