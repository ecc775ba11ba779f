"""Inversion formulas: Bargmann determinant, classical Marchenko, partial data.

All three recover a potential from second (or first) differences in x of
quantities built from shifted Hankel operators ``K_x(y + s) = K(y + s + 2x)``.
Reconstructions run on a uniform x-grid of spacing ``dx``; the recovered
values live on the interior points left after the stencil margins.

With cell quadratures whose width ``delta`` divides ``2 dx`` an odd number of
times, the discretization error of ``log det`` alternates in sign from one
grid point to the next.  The seven-point stencil used in that case is the
fourth-order second difference that annihilates this alternating mode.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import io
from .forward import ScatteringData, bound_states, scatter_real, symmetric_real_grid
from .kernels import (ContourGrid, ContourSamples, KernelFunction, g_base_kernel,
                      marchenko_kernel_classical)
from .operators import (DiscretizedOp, OperatorError, Quadrature, compose_resolved,
                        condition_number, discretize, lattice_quadrature, op_column,
                        positive_logdet, resolve, singular_values, trace_report)
from .potential import Potential, contour_params, evaluate
from .weyl import plus_end, truncation_delta_G


class ReconstructionError(RuntimeError):
    """Non-positive determinant, violated trace bound or bad grid."""


# second-difference stencils in units of 1/dx^2, offsets -m..m
STENCILS = {
    5: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
    7: np.array([-1.0, 5.0, 1.0, -10.0, 1.0, 5.0, -1.0]) / 12.0,
}
# first difference, fourth order
D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def lattice_shift(quad: Quadrature, dx: float) -> float:
    """Number of cells a step ``dx`` moves ``y_i + y_j + 2x`` by."""
    return 2 * dx / quad.delta


def choose_stencil(quad: Quadrature | None, dx: float, stencil="auto") -> int:
    if stencil != "auto":
        if int(stencil) not in STENCILS:
            raise ValueError(f"stencil must be 5, 7 or 'auto', got {stencil!r}")
        return int(stencil)
    if quad is None or quad.kind != "cell":
        return 5
    j = lattice_shift(quad, dx)
    if abs(j - round(j)) > 1e-9:
        return 5
    return 7 if int(round(j)) % 2 else 5


def stencil_grid(x_lo: float, x_hi: float, dx: float, stencil: int = 5) -> np.ndarray:
    """Uniform grid of spacing dx covering ``[x_lo, x_hi]`` plus the stencil margins."""
    m = len(STENCILS[stencil]) // 2
    n = int(round((x_hi - x_lo) / dx))
    return x_lo + dx * np.arange(-m, n + m + 1)


def _check_grid(x_grid, dx):
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ReconstructionError("x_grid needs at least two points")
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=1e-12):
        raise ReconstructionError("x_grid must be uniform with spacing dx")
    return x


def second_difference(values: np.ndarray, dx: float, stencil: int) -> np.ndarray:
    c = STENCILS[stencil]
    m = len(c) // 2
    if values.size < len(c):
        raise ReconstructionError(f"x_grid too short for the {stencil}-point stencil")
    return np.correlate(values, c, mode="valid") / dx**2, m


# ---------------------------------------------------------------------------
# operator families
# ---------------------------------------------------------------------------

@dataclass
class HankelFamily:
    """``x -> K_x`` on a fixed quadrature."""

    kernel: KernelFunction
    quad: Quadrature
    label: str = "M"

    def op(self, x: float) -> DiscretizedOp:
        return discretize(self.kernel, self.quad, x)

    def column(self, x: float) -> np.ndarray:
        return op_column(self.kernel, self.quad, x)

    def __call__(self, x: float) -> DiscretizedOp:
        return self.op(x)


def zero_kernel(s_lo: float = -50.0, s_hi: float = 50.0) -> KernelFunction:
    s = np.linspace(s_lo, s_hi, 11)
    return KernelFunction(s, np.zeros(s.size), "classical_sum", float("inf"))


@dataclass
class ReconstructionRun:
    x_grid: np.ndarray
    dx: float
    logdet: np.ndarray
    q_rec: np.ndarray
    mode: str
    stencil: int
    diagnostics: dict = field(default_factory=dict)
    q_true: np.ndarray | None = None

    @property
    def margin(self) -> int:
        return (self.x_grid.size - self.q_rec.size) // 2

    @property
    def x_rec(self) -> np.ndarray:
        m = self.margin
        return self.x_grid[m:self.x_grid.size - m]

    @property
    def error(self) -> np.ndarray | None:
        return None if self.q_true is None else self.q_rec - self.q_true

    def sup_error(self, lo: float = -math.inf, hi: float = math.inf) -> float:
        if self.q_true is None:
            raise ValueError("no reference potential attached")
        x = self.x_rec
        sel = (x >= lo - 1e-12) & (x <= hi + 1e-12)
        return float(np.max(np.abs(self.error[sel]), initial=0.0))

    def attach_truth(self, q: Potential) -> "ReconstructionRun":
        self.q_true = np.asarray(evaluate(q, self.x_rec), dtype=float)
        return self

    def to_csv(self, path):
        m = self.margin
        cols = {"x": self.x_rec, "logdet": self.logdet[m:self.logdet.size - m], "q_rec": self.q_rec}
        if self.q_true is not None:
            cols["q_true"] = self.q_true
            cols["error"] = self.error
        for key in ("cond", "nuclear_norm", "bound"):
            v = self.diagnostics.get(key)
            if v is not None:
                cols[key] = np.asarray(v)[m:len(v) - m]
        return io.write_csv(path, cols)

    def logdet_csv(self, path):
        return io.write_csv(path, {"x": self.x_grid, "logdet": self.logdet})


def _pmap(fn, xs, threads: int):
    if threads <= 1:
        return [fn(x) for x in xs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, xs))


def _quad_of(family):
    return getattr(family, "quad", None)


def bargmann_reconstruct(M_family: Callable[[float], DiscretizedOp], x_grid, dx: float,
                         stencil="auto", threads: int = 1) -> ReconstructionRun:
    """``q(x) = -2 d^2/dx^2 log det(1 + M_x)``."""
    x = _check_grid(x_grid, dx)
    st = choose_stencil(_quad_of(M_family), dx, stencil)

    def one(xx):
        op = M_family(float(xx))
        try:
            ld = positive_logdet(op)
        except OperatorError as exc:
            raise ReconstructionError(f"x={xx:.6g}: {exc}") from None
        return ld, condition_number(op)

    res = _pmap(one, x, threads)
    ld = np.array([r[0] for r in res])
    d2, _ = second_difference(ld, dx, st)
    return ReconstructionRun(x, dx, ld, -2 * d2, "bargmann_full", st,
                             {"cond": np.array([r[1] for r in res])})


def _extrapolate_to_zero(y: np.ndarray, f: np.ndarray) -> float:
    """Quadratic through the three nodes nearest 0, evaluated at 0."""
    y0, y1, y2 = y[:3]
    f0, f1, f2 = f[:3]
    l0 = y1 * y2 / ((y0 - y1) * (y0 - y2))
    l1 = y0 * y2 / ((y1 - y0) * (y1 - y2))
    l2 = y0 * y1 / ((y2 - y0) * (y2 - y1))
    return float(l0 * f0 + l1 * f1 + l2 * f2)


def marchenko_reconstruct(M_family: HankelFamily, x_grid, dx: float | None = None,
                          threads: int = 1) -> ReconstructionRun:
    """``q(x) = -2 d/dx k_x(0+)`` with ``(1 + M_x) k_x = -M_x``.

    ``logdet`` is filled as well, so the run can be cross-checked against
    the determinant route.
    """
    x = np.asarray(x_grid, dtype=float)
    dx = float(x[1] - x[0]) if dx is None else float(dx)
    x = _check_grid(x, dx)
    y = M_family.quad.nodes

    def one(xx):
        op = M_family.op(float(xx))
        rhs = -M_family.column(float(xx))
        try:
            kx, cond = resolve(op, rhs, return_cond=True)
        except OperatorError as exc:
            raise ReconstructionError(f"x={xx:.6g}: {exc}") from None
        return _extrapolate_to_zero(y, kx), cond, positive_logdet(op)

    res = _pmap(one, x, threads)
    k0 = np.array([r[0] for r in res])
    if k0.size < 5:
        raise ReconstructionError("x_grid too short for the first-difference stencil")
    q = -2 * np.correlate(k0, D1, mode="valid") / dx
    # q_rec keeps the 5-point margin convention of the determinant route
    return ReconstructionRun(x, dx, np.array([r[2] for r in res]), q, "marchenko_classical", 5,
                             {"cond": np.array([r[1] for r in res]), "k0": k0})


# ---------------------------------------------------------------------------
# partial data
# ---------------------------------------------------------------------------

def plus_kernel(q_plus: Potential, window, dk: float = 0.02, K: float = 2e4,
                tail_tol: float = 1e-5) -> KernelFunction:
    """Marchenko kernel of q_+ from its real-axis reflection and bound states."""
    lo, hi = q_plus.support()
    if not lo < hi:
        return zero_kernel(window[0] - 1, window[1] + 1)
    k = symmetric_real_grid(dk, K)
    T, L, R = scatter_real(q_plus, k)
    sd = ScatteringData(k, T, L, R, bound_states(q_plus), "plus_only")
    return marchenko_kernel_classical(sd, window=window, tail_tol=tail_tol)


def default_L(q_plus: Potential, h: float, x_min: float) -> float:
    """Half-line truncation covering the kernel support, at least 10/h."""
    b = plus_end(q_plus) if q_plus.support()[0] < q_plus.support()[1] else 0.0
    return max(10.0 / h, 2 * b - 2 * x_min + 0.5)


@dataclass
class PartialSetup:
    """Everything the partial-data determinant needs, shared across x."""

    quad: Quadrature
    M_plus: KernelFunction
    G: KernelFunction
    G_samples: ContourSamples
    h: float


def partial_setup(q_plus: Potential, G_contour: ContourSamples, x_lo: float, x_hi: float,
                  dx: float, N: int = 200, L: float | None = None, scheme: str = "cell",
                  M_plus: KernelFunction | None = None, dk: float = 0.02, K: float = 2e4,
                  margin: float = 0.5) -> PartialSetup:
    h = G_contour.grid.h
    if L is None:
        L = default_L(q_plus, h, x_lo)
    if scheme == "cell":
        quad, _ = lattice_quadrature(N, dx, L)
    elif scheme == "gauss":
        quad = Quadrature.gauss(N, L)
    else:
        raise ValueError("scheme must be 'cell' or 'gauss'")
    lo = 2 * x_lo - margin
    hi = 2 * quad.L + 2 * x_hi + margin
    if M_plus is None:
        M_plus = plus_kernel(q_plus, (lo, hi), dk, K)
    G = g_base_kernel(G_contour, t_window=(lo, hi))
    return PartialSetup(quad, M_plus, G, G_contour, h)


def partial_logdet(setup: PartialSetup, x: float, with_trace: bool = True) -> dict:
    """``log det(1 + (1 + M_x^+)^{-1} G_x)`` and diagnostics at one x."""
    opM = discretize(setup.M_plus, setup.quad, x)
    opG = discretize(setup.G, setup.quad, x)
    try:
        comp = compose_resolved(opM, opG)
        ld = positive_logdet(comp)
    except OperatorError as exc:
        raise ReconstructionError(f"x={x:.6g}: {exc}") from None
    out = {"x": x, "logdet": ld, "cond": comp.meta["condition_number"]}
    if with_trace:
        rep = trace_report(opG, setup.G_samples.l1_norm(shift_x=x), setup.h)
        out.update(nuclear_norm=rep.nuclear_norm, bound=rep.trace_bound, satisfied=rep.satisfied,
                   hs_norm=rep.hs_norm,
                   nuclear_composed=float(np.sum(singular_values(comp))),
                   nuclear_M_plus=float(np.sum(singular_values(opM))))
    return out


def partial_data_reconstruct(q_plus: Potential, G_contour: ContourSamples, x_grid, dx: float,
                             N: int = 200, L: float | None = None, scheme: str = "cell",
                             stencil="auto", threads: int = 1,
                             M_plus: KernelFunction | None = None, with_trace: bool = True,
                             setup: PartialSetup | None = None, **kw) -> ReconstructionRun:
    """``q_-(x) = -2 d^2/dx^2 log det(1 + (1 + M_x^+)^{-1} G_x)`` for x < 0.

    ``M^+`` comes from the scattering data of q_+ alone (real axis plus bound
    states); ``G`` is synthesized from the contour samples of ``R - R_+``.
    Every x gets a trace report for ``G_x``; a violated bound aborts.
    """
    x = _check_grid(x_grid, dx)
    if np.any(x >= 0):
        raise ReconstructionError("partial-data reconstruction needs x < 0")
    if setup is None:
        setup = partial_setup(q_plus, G_contour, float(x[0]), float(x[-1]), dx, N, L, scheme,
                              M_plus, **kw)
    st = choose_stencil(setup.quad, dx, stencil)
    rows = _pmap(lambda xx: partial_logdet(setup, float(xx), with_trace), x, threads)
    if with_trace:
        bad = [r for r in rows if not r["satisfied"]]
        if bad:
            r = bad[0]
            raise ReconstructionError(
                f"trace bound violated at x={r['x']:.6g}: nuclear norm {r['nuclear_norm']:.6e} "
                f"> bound {r['bound']:.6e} (synthesis error)")
    ld = np.array([r["logdet"] for r in rows])
    d2, _ = second_difference(ld, dx, st)
    diag = {key: np.array([r[key] for r in rows]) for key in rows[0] if key not in ("x", "logdet")}
    diag.update(L=setup.quad.L, N=setup.quad.N, scheme=setup.quad.kind, h=setup.h)
    return ReconstructionRun(x, dx, ld, -2 * d2, "partial_data", st, diag)


def determinant_splitting(M_full: HankelFamily, M_plus: HankelFamily, G: HankelFamily,
                          xs: Sequence[float]) -> np.ndarray:
    """``log det(1+M~_x) - log det(1+M~_x^+) - log det(1+(1+M~_x^+)^{-1} G~_x)`` per x."""
    out = []
    for x in xs:
        a = positive_logdet(M_full.op(x))
        opM = M_plus.op(x)
        b = positive_logdet(opM)
        c = positive_logdet(compose_resolved(opM, G.op(x)))
        out.append(a - b - c)
    return np.array(out)


# ---------------------------------------------------------------------------
# truncation study
# ---------------------------------------------------------------------------

@dataclass
class TruncationRow:
    a: float
    delta_G_l1: float
    delta_nuclear: float
    delta_bound: float
    q_rec: float
    q_rec_change: float = float("nan")


def truncation_study(q: Potential, a_list: Sequence[float], x_probe: float,
                     grid: ContourGrid | None = None, dx: float = 0.02, N: int = 200,
                     L: float | None = None, scheme: str = "cell", A: float = 2e3,
                     d_alpha: float = 0.25, with_q: bool = True) -> list[TruncationRow]:
    """Compare q with its truncations ``q chi_[-a, inf)`` as a grows.

    Reports ``||e^{2ikx} delta G||_{L^1(R+ih)}`` at ``x_probe``, the nuclear
    norm of the discretized ``delta G_x`` with its trace bound, and the
    reconstructed ``q~(x_probe)``.
    """
    a_list = sorted(float(a) for a in a_list)
    if grid is None:
        grid = ContourGrid.uniform_grid(contour_params(q).h, A, d_alpha)
    qp = q.plus()
    st = 7 if scheme == "cell" else 5
    xg = stencil_grid(x_probe, x_probe, dx, st)
    base_setup = None
    rows = []
    for a in a_list:
        td = truncation_delta_G(q, a, grid.k)
        dS = ContourSamples(grid, td.delta, "dG")
        setup = partial_setup(qp, ContourSamples(grid, td.G_trunc, "G"), float(xg[0]),
                              float(xg[-1]), dx, N, L, scheme,
                              M_plus=None if base_setup is None else base_setup.M_plus)
        base_setup = base_setup or setup
        dK = g_base_kernel(dS, t_window=(2 * xg[0] - 0.5, 2 * setup.quad.L + 2 * xg[-1] + 0.5))
        rep = trace_report(discretize(dK, setup.quad, x_probe), dS.l1_norm(shift_x=x_probe), grid.h)
        qv = float("nan")
        if with_q:
            run = partial_data_reconstruct(qp, setup.G_samples, xg, dx, setup=setup,
                                           stencil=st, with_trace=False)
            qv = float(run.q_rec[0])
        rows.append(TruncationRow(a, dS.l1_norm(shift_x=x_probe), rep.nuclear_norm,
                                  rep.trace_bound, qv))
    ref = rows[-1].q_rec
    for r in rows:
        r.q_rec_change = abs(r.q_rec - ref)
    return rows


def truncation_csv(path, rows: list[TruncationRow]):
    return io.write_csv(path, {"a": [r.a for r in rows], "delta_G_l1": [r.delta_G_l1 for r in rows],
                               "delta_nuclear": [r.delta_nuclear for r in rows],
                               "delta_bound": [r.delta_bound for r in rows],
                               "q_rec": [r.q_rec for r in rows],
                               "q_rec_change": [r.q_rec_change for r in rows]})
