"""Discretized Hankel operators on ``L^2(0, L)``, determinants and norms.

A Hankel operator ``(K_x f)(y) = int_0^L K(y + s + 2x) f(s) ds`` is replaced
by an ``N x N`` symmetric matrix in one of two ways:

``gauss``
    Nystrom on Gauss-Legendre nodes, ``sqrt(w_i) K(y_i + y_j + 2x) sqrt(w_j)``.
    Spectrally accurate for smooth kernels.
``cell``
    Galerkin with piecewise constants on ``N`` equal cells of width ``delta``.
    Entry ``(i, j)`` is ``delta`` times the triangle-weighted average of the
    kernel around ``y_i + y_j + 2x``.  Second-order and insensitive to kinks,
    which the kernels of piecewise-smooth potentials have.

The matrices are similarity transforms of the discrete operator, so their
determinants, singular values and norms are those of the operator itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import io
from .kernels import KernelError, KernelFunction

COND_LIMIT = 1e12


class OperatorError(RuntimeError):
    """Near-singular ``I + A`` or a non-positive determinant."""


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights on ``(0, L)``."""

    nodes: np.ndarray
    weights: np.ndarray
    L: float
    kind: str = "gauss"

    def __post_init__(self):
        if self.kind not in ("gauss", "cell"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if self.nodes[0] <= 0 or self.nodes[-1] >= self.L:
            raise ValueError("nodes must lie in (0, L)")

    @classmethod
    def gauss(cls, N: int, L: float) -> "Quadrature":
        t, w = leggauss(int(N))
        return cls(0.5 * L * (t + 1), 0.5 * L * w, float(L), "gauss")

    @classmethod
    def cell(cls, N: int, L: float) -> "Quadrature":
        d = L / N
        return cls((np.arange(N) + 0.5) * d, np.full(N, d), float(L), "cell")

    @property
    def N(self) -> int:
        return int(self.nodes.size)

    @property
    def delta(self) -> float:
        if self.kind != "cell":
            raise ValueError("delta is defined for cell quadratures only")
        return float(self.weights[0])


def lattice_quadrature(N: int, dx: float, L_min: float) -> tuple[Quadrature, int]:
    """Cell quadrature whose width divides ``2 dx``; returns it with ``j = 2dx/delta``.

    A step ``dx`` in x moves ``y_i + y_j + 2x`` by exactly ``j`` cells, so the
    matrices at neighbouring stencil points see the kernel on the same lattice.
    The largest admissible ``delta`` is used, giving ``L = N delta >= L_min``.
    """
    if dx <= 0 or L_min <= 0:
        raise ValueError("dx and L_min must be positive")
    if 2 * dx * N < L_min * (1 - 1e-12):
        raise OperatorError(f"N={N} cells of width at most 2dx={2 * dx:.3g} cannot reach "
                            f"L={L_min:.4g}; raise N to {math.ceil(L_min / (2 * dx))}")
    j = max(1, int(math.floor(2 * dx * N / L_min + 1e-9)))
    delta = 2 * dx / j
    return Quadrature.cell(N, N * delta), j


@dataclass
class DiscretizedOp:
    """Matrix of a discretized operator together with its quadrature."""

    matrix: np.ndarray
    quad: Quadrature
    provenance: str = ""
    symmetric: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def _same(self, other: "DiscretizedOp"):
        if other.quad is not self.quad and not (
                other.quad.kind == self.quad.kind and np.array_equal(other.quad.nodes, self.quad.nodes)):
            raise ValueError("operators live on different quadratures")

    def __add__(self, other: "DiscretizedOp") -> "DiscretizedOp":
        self._same(other)
        return DiscretizedOp(self.matrix + other.matrix, self.quad,
                             f"({self.provenance})+({other.provenance})",
                             self.symmetric and other.symmetric)

    def __sub__(self, other: "DiscretizedOp") -> "DiscretizedOp":
        self._same(other)
        return DiscretizedOp(self.matrix - other.matrix, self.quad,
                             f"({self.provenance})-({other.provenance})",
                             self.symmetric and other.symmetric)

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T), initial=0.0))


def zero_op(quad: Quadrature) -> DiscretizedOp:
    return DiscretizedOp(np.zeros((quad.N, quad.N)), quad, "zero")


def discretize(K: KernelFunction, quad: Quadrature, x: float = 0.0) -> DiscretizedOp:
    """Matrix of ``f -> int_0^L K(y + s + 2x) f(s) ds``.

    The kernel has to be available from ``2 min(y) + 2x`` on (``- delta``
    more for cells); a missing stretch raises :class:`KernelError`.  The
    largest kernel value past ``2L + 2x`` is kept in ``meta['tail']``.
    """
    y = quad.nodes
    S = y[:, None] + y[None, :] + 2 * x
    try:
        if quad.kind == "gauss":
            sw = np.sqrt(quad.weights)
            A = sw[:, None] * K(S) * sw[None, :]
        else:
            d = quad.delta
            A = d * K.cell_average(S, d)
    except KernelError as exc:
        raise KernelError(f"kernel does not cover the operator at x={x:.6g}: {exc}") from None
    A = 0.5 * (A + A.T)
    edge = 2 * quad.L + 2 * x
    tail = float(np.max(np.abs(K(np.array([edge, edge + 1.0])))))
    return DiscretizedOp(A, quad, f"{K.provenance} @ x={x:.6g}", True, {"x": x, "tail": tail})


def op_column(K: KernelFunction, quad: Quadrature, x: float = 0.0) -> np.ndarray:
    """The function ``y -> K(y + 2x)`` in the representation used by :func:`resolve`.

    Gauss: point values.  Cells: cell averages.
    """
    y = quad.nodes
    if quad.kind == "gauss":
        return np.asarray(K(y + 2 * x), dtype=float)
    d = quad.delta
    # cell average of K(. + 2x) over [y - d/2, y + d/2] from the first antiderivative
    p1 = K.spline().antiderivative(1)
    a, b = y - d / 2 + 2 * x, y + d / 2 + 2 * x
    K(np.array([a[0]]))  # coverage check
    hi = K.s_max
    val = p1(np.minimum(b, hi)) - p1(np.minimum(a, hi))
    return val / d


def fredholm_logdet(op: DiscretizedOp) -> tuple[float, float]:
    """``(sign, log|det(I + A)|)``."""
    sign, logabs = np.linalg.slogdet(np.eye(op.N) + op.matrix)
    return float(sign), float(logabs)


def fredholm_det(op: DiscretizedOp) -> float:
    """``det(I + A)``."""
    sign, logabs = fredholm_logdet(op)
    return sign * math.exp(logabs) if sign != 0 else 0.0


def positive_logdet(op: DiscretizedOp) -> float:
    sign, logabs = fredholm_logdet(op)
    if sign <= 0:
        raise OperatorError(f"det(I + A) is not positive ({op.provenance}); "
                            "inadmissible data or contour too low")
    return logabs


@dataclass
class TraceReport:
    nuclear_norm: float
    hs_norm: float
    trace_bound: float
    satisfied: bool
    singular_values: np.ndarray = field(repr=False, default=None)
    slack: float = 1e-3

    def as_row(self) -> dict:
        return {"nuclear_norm": self.nuclear_norm, "hs_norm": self.hs_norm,
                "bound": self.trace_bound, "satisfied": self.satisfied}


def singular_values(op: DiscretizedOp) -> np.ndarray:
    return np.linalg.svd(op.matrix, compute_uv=False)


def trace_report(op: DiscretizedOp, kernel_contour_l1: float, h: float,
                 slack: float = 1e-3) -> TraceReport:
    """Nuclear and Hilbert-Schmidt norms against ``(1/(4 pi h)) ||A||_{L^1(R+ih)}``."""
    if not h > 0:
        raise ValueError("need h > 0")
    sv = singular_values(op)
    nuc = float(np.sum(sv))
    hs = float(np.sqrt(np.sum(sv * sv)))
    bound = float(kernel_contour_l1) / (4 * math.pi * h)
    return TraceReport(nuc, hs, bound, nuc <= bound * (1 + slack), sv, slack)


def condition_number(op: DiscretizedOp) -> float:
    return float(np.linalg.cond(np.eye(op.N) + op.matrix))


def resolve(op: DiscretizedOp, rhs, return_cond: bool = False):
    """Solve ``(I + A) f = rhs``.

    ``rhs`` holds function values at the nodes (cell averages for cell
    quadratures), and so does the result.  The weights are applied
    internally, so point values stay point values.
    """
    rhs = np.asarray(rhs, dtype=float)
    cond = condition_number(op)
    if not cond < COND_LIMIT:
        raise OperatorError(f"I + A is near-singular (condition number {cond:.3e})")
    sw = np.sqrt(op.quad.weights)
    f = np.linalg.solve(np.eye(op.N) + op.matrix, sw * rhs) / sw
    return (f, cond) if return_cond else f


def apply(op: DiscretizedOp, f) -> np.ndarray:
    """``(I + A) f`` in the same representation as :func:`resolve`."""
    sw = np.sqrt(op.quad.weights)
    f = np.asarray(f, dtype=float)
    return f + (op.matrix @ (sw * f)) / sw


def compose_resolved(opM: DiscretizedOp, opG: DiscretizedOp) -> DiscretizedOp:
    """``(I + M)^{-1} G`` on the common quadrature."""
    opM._same(opG)
    cond = condition_number(opM)
    if not cond < COND_LIMIT:
        raise OperatorError(f"I + M is near-singular (condition number {cond:.3e})")
    X = np.linalg.solve(np.eye(opM.N) + opM.matrix, opG.matrix)
    return DiscretizedOp(X, opM.quad, f"(1+{opM.provenance})^-1 {opG.provenance}", False,
                         {"condition_number": cond})


def write_sweep_csv(path, rows: list[dict]):
    """Determinant sweep rows ``x, det, nuclear_norm, bound, condition_number``."""
    cols = ["x", "det", "nuclear_norm", "bound", "condition_number"]
    io.write_csv(path, {c: [r.get(c, float("nan")) for r in rows] for c in cols})
