"""Piecewise potentials on the line, their norms and contour constants.

Units follow hbar = 2m = 1, so the Schrodinger equation reads
``-u'' + q u = k^2 u``.  A :class:`Potential` is an ordered tuple of pieces
that partition the real line.  Each piece carries one analytic shape or a
linearly interpolated sample grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

INF = math.inf

# Relative level below which a decaying shape counts as zero when an
# infinite interval has to be cut to a finite one.
NEGLIGIBLE = 1e-14

_GL8 = leggauss(8)
_GL16 = leggauss(16)


class PotentialError(ValueError):
    """Raised for malformed or inadmissible potentials."""


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Shape:
    """Base class: a real function of x restricted to a piece."""

    constant = False

    def __call__(self, x):
        raise NotImplementedError

    def shifted(self, z: float) -> "Shape":
        """Shape of ``x -> f(x + z)``."""
        raise NotImplementedError

    def extent(self, rel: float = NEGLIGIBLE) -> tuple[float, float]:
        """Interval outside which ``|f| < rel * max|f|`` (infinite if never)."""
        return (-INF, INF)

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def maxabs(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Shape):
    C: float = 0.0
    constant = True

    def __call__(self, x):
        return np.full(np.shape(x), float(self.C))

    def shifted(self, z):
        return self

    def extent(self, rel=NEGLIGIBLE):
        return (INF, -INF) if self.C == 0.0 else (-INF, INF)

    def maxabs(self):
        return abs(self.C)


@dataclass(frozen=True)
class Soliton(Shape):
    """One-soliton profile ``-2 kappa^2 sech^2(kappa (x - x0) + log(sqrt(2 kappa)/c))``."""

    kappa: float = 1.0
    c: float = math.sqrt(2.0)
    x0: float = 0.0

    @property
    def center(self) -> float:
        return self.x0 - math.log(math.sqrt(2 * self.kappa) / self.c) / self.kappa

    def __call__(self, x):
        u = self.kappa * (np.asarray(x, dtype=float) - self.center)
        return -2 * self.kappa**2 / np.cosh(u) ** 2

    def shifted(self, z):
        return replace(self, x0=self.x0 - z)

    def extent(self, rel=NEGLIGIBLE):
        w = math.log(4.0 / rel) / (2 * self.kappa)
        return (self.center - w, self.center + w)

    def maxabs(self):
        return 2 * self.kappa**2


@dataclass(frozen=True)
class ExpDecay(Shape):
    """Two-sided exponential ``A exp(-lam |x - x0|)``."""

    A: float = 1.0
    lam: float = 1.0
    x0: float = 0.0

    def __call__(self, x):
        return self.A * np.exp(-self.lam * np.abs(np.asarray(x, dtype=float) - self.x0))

    def shifted(self, z):
        return replace(self, x0=self.x0 - z)

    def extent(self, rel=NEGLIGIBLE):
        w = math.log(1.0 / rel) / self.lam
        return (self.x0 - w, self.x0 + w)

    def breakpoints(self):
        return (self.x0,)

    def maxabs(self):
        return abs(self.A)


@dataclass(frozen=True)
class Sampled(Shape):
    """Linear interpolation through ``(x_i, q_i)``."""

    x: tuple = ()
    q: tuple = ()

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        if xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise PotentialError("sampled grid must have >= 2 strictly increasing points")
        if len(self.q) != xs.size or not np.all(np.isfinite(self.q)):
            raise PotentialError("sampled values must be finite and match the grid")

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.q)

    def shifted(self, z):
        return Sampled(tuple(np.asarray(self.x) - z), self.q)

    def extent(self, rel=NEGLIGIBLE):
        return (self.x[0], self.x[-1])

    def breakpoints(self):
        return tuple(self.x)

    def maxabs(self):
        return float(np.max(np.abs(self.q)))


@dataclass(frozen=True)
class Piece:
    x_lo: float
    x_hi: float
    shape: Shape

    def __call__(self, x):
        return self.shape(x)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.shape, Constant) and self.shape.C == 0.0

    def interior_breaks(self) -> list[float]:
        return [b for b in self.shape.breakpoints() if self.x_lo < b < self.x_hi]

    def effective(self, rel=NEGLIGIBLE) -> tuple[float, float]:
        """Part of the piece where the shape is not negligible."""
        lo, hi = self.shape.extent(rel)
        return max(lo, self.x_lo), min(hi, self.x_hi)


# ---------------------------------------------------------------------------
# potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Real potential given by pieces partitioning the line.

    The pieces are sorted, the first starts at -inf and the last ends at
    +inf.  A point that is shared by two pieces belongs to the right one.
    Use :func:`from_pieces` or :func:`from_config` rather than the
    constructor.
    """

    pieces: tuple[Piece, ...]
    name: str = ""

    def __post_init__(self):
        ps = self.pieces
        if not ps or ps[0].x_lo != -INF or ps[-1].x_hi != INF:
            raise PotentialError("pieces must cover the real line")
        for a, b in zip(ps[:-1], ps[1:]):
            if a.x_hi != b.x_lo:
                raise PotentialError("pieces must be contiguous and non-overlapping")
        for p in ps:
            if not p.x_lo < p.x_hi:
                raise PotentialError("empty piece interval")

    def __call__(self, x):
        return evaluate(self, x)

    # convenience accessors used all over the package
    @property
    def breakpoints(self) -> list[float]:
        """Finite piece boundaries and interior shape kinks, sorted."""
        pts = set()
        for p in self.pieces:
            for b in (p.x_lo, p.x_hi):
                if math.isfinite(b):
                    pts.add(float(b))
            pts.update(p.interior_breaks())
        return sorted(pts)

    def plus(self) -> "Potential":
        """q_+ = q on [0, inf), zero on the left."""
        return restrict(self, 0.0, INF)

    def minus(self) -> "Potential":
        """q_- = q on (-inf, 0), zero on the right."""
        return restrict(self, -INF, 0.0)

    def support(self) -> tuple[float, float]:
        """Smallest interval outside which q vanishes (numerically)."""
        lo, hi = INF, -INF
        for p in self.pieces:
            if p.is_zero:
                continue
            a, b = p.effective()
            if a < b:
                lo, hi = min(lo, a), max(hi, b)
        return (lo, hi) if lo <= hi else (0.0, 0.0)

    def is_compact(self) -> bool:
        lo, hi = self.support()
        for p in (self.pieces[0], self.pieces[-1]):
            if not p.is_zero and p.shape.constant:
                return False
        return math.isfinite(lo) and math.isfinite(hi)

    def to_dict(self) -> dict:
        out = []
        for p in self.pieces:
            d = {"interval": [p.x_lo, p.x_hi], "shape": type(p.shape).__name__.lower()}
            for k, v in vars(p.shape).items():
                d[k] = list(v) if isinstance(v, tuple) else v
            out.append(d)
        return {"name": self.name, "pieces": out}


def _zero(lo, hi):
    return Piece(lo, hi, Constant(0.0))


def _normalize(pieces: Iterable[Piece]) -> tuple[Piece, ...]:
    """Sort, fill gaps with zero and merge adjacent zero pieces."""
    ps = sorted((p for p in pieces if p.x_lo < p.x_hi), key=lambda p: p.x_lo)
    out: list[Piece] = []
    cur = -INF
    for p in ps:
        if p.x_lo < cur:
            raise PotentialError(f"overlapping pieces near x={p.x_lo}")
        if p.x_lo > cur:
            out.append(_zero(cur, p.x_lo))
        out.append(p)
        cur = p.x_hi
    if cur < INF:
        out.append(_zero(cur, INF))
    merged: list[Piece] = []
    for p in out:
        if merged and p.is_zero and merged[-1].is_zero:
            merged[-1] = _zero(merged[-1].x_lo, p.x_hi)
        else:
            merged.append(p)
    return tuple(merged)


def from_pieces(pieces: Iterable[Piece], name: str = "") -> Potential:
    return Potential(_normalize(pieces), name)


def zero() -> Potential:
    return Potential((_zero(-INF, INF),), "zero")


def constant(C: float, lo: float = -INF, hi: float = INF) -> Potential:
    return from_pieces([Piece(lo, hi, Constant(float(C)))], f"constant({C})")


def square_well(level: float, a: float, b: float) -> Potential:
    """``q = level`` on ``[a, b]`` and zero elsewhere (negative level is a well)."""
    if not a < b:
        raise PotentialError("square well needs a < b")
    return from_pieces([Piece(a, b, Constant(float(level)))], f"square_well({level},{a},{b})")


def soliton(kappa: float = 1.0, c: float = math.sqrt(2.0), lo=-INF, hi=INF) -> Potential:
    if kappa <= 0 or c <= 0:
        raise PotentialError("soliton needs kappa > 0 and c > 0")
    return from_pieces([Piece(lo, hi, Soliton(kappa, c))], f"soliton({kappa},{c})")


def exp_decay(A: float, lam: float, lo=-INF, hi=INF, x0: float = 0.0) -> Potential:
    if lam <= 0:
        raise PotentialError("exp_decay needs lam > 0")
    return from_pieces([Piece(lo, hi, ExpDecay(A, lam, x0))], f"exp_decay({A},{lam})")


def sampled(x: Sequence[float], q: Sequence[float]) -> Potential:
    s = Sampled(tuple(map(float, x)), tuple(map(float, q)))
    return from_pieces([Piece(s.x[0], s.x[-1], s)], "sampled")


def combine(*parts: Potential, name: str = "") -> Potential:
    """Join potentials whose non-zero pieces do not overlap."""
    pieces = [p for pot in parts for p in pot.pieces if not p.is_zero]
    return from_pieces(pieces, name or "+".join(p.name for p in parts))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def evaluate(p: Potential, x):
    """Value of q at ``x`` (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    flat = xa.reshape(-1)
    lows = np.array([pc.x_lo for pc in p.pieces])
    idx = np.searchsorted(lows, flat, side="right") - 1
    out = np.empty(flat.shape)
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = p.pieces[i](flat[sel])
    out = out.reshape(xa.shape)
    return float(out) if out.ndim == 0 else out


def restrict(p: Potential, lo: float, hi: float) -> Potential:
    """q times the indicator of ``[lo, hi]``."""
    pieces = []
    for pc in p.pieces:
        a, b = max(pc.x_lo, lo), min(pc.x_hi, hi)
        if a < b and not pc.is_zero:
            pieces.append(Piece(a, b, pc.shape))
    return from_pieces(pieces, p.name)


def truncate(p: Potential, a: float) -> Potential:
    """Truncation ``q * chi_[-a, a]``."""
    if not a > 0:
        raise PotentialError("truncation radius must be positive")
    out = restrict(p, -a, a)
    return replace(out, name=f"{p.name}|trunc({a})")


def shift(p: Potential, z: float) -> Potential:
    """The shifted potential ``x -> q(x + z)``."""
    pieces = [Piece(pc.x_lo - z, pc.x_hi - z, pc.shape.shifted(z)) for pc in p.pieces]
    return Potential(tuple(pieces), p.name)


# ---------------------------------------------------------------------------
# quadrature over pieces
# ---------------------------------------------------------------------------

def _panels(p: Potential, lo: float, hi: float, width: float = 0.25) -> np.ndarray:
    """Panel edges on [lo, hi] aligned with every breakpoint."""
    pts = [lo, hi] + [b for b in p.breakpoints if lo < b < hi]
    pts = np.unique(pts)
    edges = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        edges.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(edges)


def gl_nodes(edges: np.ndarray, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    t, w = leggauss(order) if order not in (8, 16) else (_GL8 if order == 8 else _GL16)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    return x.reshape(-1), wx.reshape(-1)


def _finite_range(p: Potential, lo: float, hi: float) -> tuple[float, float, float, float]:
    """Cut [lo, hi] to where q matters; also return constant tail values.

    The returned tails are the constant values of q beyond the cut on each
    side (zero for decaying shapes).
    """
    a, b = lo, hi
    tail_lo = tail_hi = 0.0
    if not math.isfinite(lo):
        first = restrict(p, lo, hi).pieces[0]
        if first.shape.constant:
            tail_lo = first.shape.C
            a = first.x_hi if math.isfinite(first.x_hi) else 0.0
        else:
            a = first.effective()[0]
        a = min(a, min([x for x in p.breakpoints if x > lo] or [a]))
        if not math.isfinite(a):
            a = min(0.0, hi - 1.0)
    if not math.isfinite(hi):
        last = restrict(p, lo, hi).pieces[-1]
        if last.shape.constant:
            tail_hi = last.shape.C
            b = last.x_lo if math.isfinite(last.x_lo) else 0.0
        else:
            b = last.effective()[1]
        b = max(b, max([x for x in p.breakpoints if x < hi] or [b]))
        if not math.isfinite(b):
            b = max(0.0, lo + 1.0)
    a = max(a, lo)
    b = min(b, hi)
    return a, max(a, b), tail_lo, tail_hi


def integrate(p: Potential, f_of_q_x, lo: float, hi: float) -> float:
    """``int_lo^hi f(q(x), x) dx`` by composite GL, cut where q is negligible.

    Constant non-zero tails on an infinite side give ``inf``.
    """
    a, b, tl, th = _finite_range(p, lo, hi)
    if (tl != 0.0 and not math.isfinite(lo)) or (th != 0.0 and not math.isfinite(hi)):
        return INF
    if b <= a:
        return 0.0
    x, w = gl_nodes(_panels(p, a, b))
    return float(np.sum(w * f_of_q_x(evaluate(p, x), x)))


def _window_sup(p: Potential, power: int) -> float:
    """``sup_{x <= 0} int_{x-1}^x |q|^power`` for the minus part."""
    qm = p.minus()
    a, _, tl, _ = _finite_range(qm, -INF, 0.0)
    a = min(a, -1.0) - 1.0
    # cumulative integral on a fine grid containing every breakpoint and
    # every breakpoint shifted by one, so window edges are grid points
    br = [b for b in qm.breakpoints if a <= b <= 0.0]
    base = np.arange(a, 0.0, 1.0 / 512)
    grid = np.unique(np.concatenate([base, br, np.asarray(br) + 1.0,
                                     np.asarray(br) - 1.0, [a, a + 1.0, -1.0, 0.0]]))
    grid = grid[(grid >= a) & (grid <= 0.0)]
    t, w = _GL8
    mid = 0.5 * (grid[1:] + grid[:-1])
    half = 0.5 * (grid[1:] - grid[:-1])
    xs = mid[:, None] + half[:, None] * t
    vals = np.abs(evaluate(qm, xs)) ** power
    seg = np.sum(vals * w, axis=1) * half
    F = np.concatenate([[0.0], np.cumsum(seg)])
    ends = grid[grid >= a + 1.0]
    win = np.interp(ends, grid, F) - np.interp(ends - 1.0, grid, F)
    best = float(np.max(win)) if win.size else 0.0
    return max(best, abs(tl) ** power)


@dataclass(frozen=True)
class ClassReport:
    """Norms of q_+ and q_- entering the admissibility hypotheses."""

    l11_plus: float
    l1_plus: float
    l1x_plus: float
    linf_l2_minus: float
    linf_l1_minus: float
    admissible_flags: Mapping[str, bool] = field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        return all(self.admissible_flags.values())


def classify(p: Potential) -> ClassReport:
    """Norms ``||q_+||_{L^1_1}``, ``||q_+||_{L^1}``, ``int x|q_+|`` and the
    Birman-Solomyak norms of q_- over unit windows."""
    qp = p.plus()
    l1 = integrate(qp, lambda q, x: np.abs(q), 0.0, INF)
    l1x = integrate(qp, lambda q, x: x * np.abs(q), 0.0, INF)
    l11 = l1 + l1x
    l2m = math.sqrt(_window_sup(p, 2))
    l1m = _window_sup(p, 1)
    flags = {"q_plus_faddeev": math.isfinite(l11), "q_minus_linf_l2": math.isfinite(l2m)}
    return ClassReport(l11, l1, l1x, l2m, l1m, flags)


@dataclass(frozen=True)
class ContourParams:
    """Constants fixing the admissible contour ``R + ih``."""

    gamma_minus: float
    gamma_plus: float
    gamma: float
    h_minus: float
    h_plus: float
    beta: float
    h0: float
    h: float
    margin: float = 0.25

    def as_dict(self) -> dict:
        return dict(vars(self))


def C_minus(h: float, gamma: float, linf_l1: float) -> float:
    """Contour constant for q_- at height h."""
    if linf_l1 == 0.0:
        return 0.0
    d = h - gamma
    if d <= 0:
        return INF
    s = sum((2 * d) ** j / math.factorial(j) for j in range(3))
    return linf_l1 / (1 - math.exp(-2 * h)) + s * linf_l1**2 / (4 * d**3)


def C_plus(h: float, gamma: float, l1: float) -> float:
    """Contour constant for q_+ at height h."""
    if l1 == 0.0:
        return 0.0
    d = h - gamma
    if d <= 0:
        return INF
    return l1 + l1**2 / d


def _threshold(C, gamma: float) -> float:
    """``inf{h > gamma : C(h) < h/2}`` by bisection (C decreases in h)."""
    f = lambda h: C(h) - h / 2
    if C(gamma + 1.0) == 0.0:
        return gamma
    lo, hi = gamma, gamma + 1.0
    while f(hi) >= 0:
        hi = gamma + 2 * (hi - gamma)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi


def contour_params(p: Potential, margin: float = 0.25,
                   report: ClassReport | None = None) -> ContourParams:
    """Constants gamma, h_+-, beta, h0 and the working height ``h0 (1 + margin)``."""
    if margin <= 0:
        raise PotentialError("margin must be positive")
    r = report or classify(p)
    if not r.admissible:
        raise PotentialError(f"potential is not admissible: {dict(r.admissible_flags)}")
    n2 = r.linf_l2_minus
    gm = max(math.sqrt(2 * n2), math.e * n2)
    gp = r.l1_plus / 2
    g = max(gm, gp)
    hm = _threshold(lambda h: C_minus(h, g, r.linf_l1_minus), g)
    hp = _threshold(lambda h: C_plus(h, g, r.l1_plus), g)
    beta = 2 * max(r.l11_plus, 1.0)
    h0 = max(hp, hm, beta)
    return ContourParams(gm, gp, g, hm, hp, beta, h0, h0 * (1 + margin), margin)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _interval(d: Mapping, default=(-INF, INF)) -> tuple[float, float]:
    iv = d.get("interval", default)
    return tuple(float(v) if v is not None else (-INF if i == 0 else INF)
                 for i, v in enumerate(iv))


def read_sampled_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column CSV ``x, q`` with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise PotentialError(f"{path}: need a header and at least two rows")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise PotentialError(f"{path}: malformed row") from exc
    return data[:, 0], data[:, 1]


def piece_from_config(d: Mapping, base: Path | None = None) -> Piece:
    shape = str(d.get("shape", "")).lower()
    if shape == "zero":
        lo, hi = _interval(d)
        return Piece(lo, hi, Constant(0.0))
    if shape == "constant":
        lo, hi = _interval(d)
        return Piece(lo, hi, Constant(float(d["C"])))
    if shape in ("square_well", "square_barrier"):
        a, b = float(d["a"]), float(d["b"])
        level = float(d.get("depth", d.get("level", 0.0)))
        if not a < b:
            raise PotentialError("square well needs a < b")
        return Piece(a, b, Constant(level))
    if shape == "soliton":
        lo, hi = _interval(d)
        return Piece(lo, hi, Soliton(float(d.get("kappa", 1.0)), float(d.get("c", math.sqrt(2))),
                                     float(d.get("x0", 0.0))))
    if shape == "exp_decay":
        lo, hi = _interval(d)
        lam = float(d.get("lam", d.get("lambda", 1.0)))
        if lam <= 0:
            raise PotentialError("exp_decay needs lam > 0")
        return Piece(lo, hi, ExpDecay(float(d["A"]), lam, float(d.get("x0", 0.0))))
    if shape == "sampled":
        if "file" in d:
            path = Path(d["file"])
            if base is not None and not path.is_absolute():
                path = base / path
            xs, qs = read_sampled_csv(path)
        else:
            xs, qs = np.asarray(d["x"], float), np.asarray(d["q"], float)
        s = Sampled(tuple(xs), tuple(qs))
        return Piece(s.x[0], s.x[-1], s)
    raise PotentialError(f"unknown shape {shape!r}")


def from_config(cfg: Mapping | Sequence, base: str | Path | None = None) -> Potential:
    """Build a potential from a key-value tree ``{"pieces": [...]}``."""
    items = cfg.get("pieces", []) if isinstance(cfg, Mapping) else cfg
    name = cfg.get("name", "") if isinstance(cfg, Mapping) else ""
    try:
        pieces = [piece_from_config(d, Path(base) if base else None) for d in items]
    except (KeyError, TypeError) as exc:
        raise PotentialError(f"bad piece description: {exc}") from exc
    return from_pieces(pieces, name)
