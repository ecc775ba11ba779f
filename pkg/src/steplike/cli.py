"""Batch front end: ``steplike run|verify <scenario> [--out DIR] [--threads N] [--override k=v]``.

Exit status: 0 on success, 2 for an invalid scenario, 3 for a numerical
failure (including failed verification checks).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .forward import (ScatteringError, WaveNumber, bound_states, numerical_support, scatter,
                      symmetric_real_grid)
from .kernels import ContourGrid, ContourSamples, KernelError, sample
from .operators import OperatorError
from .potential import PotentialError, classify, contour_params
from .operators import Quadrature, lattice_quadrature, write_sweep_csv
from .reconstruct import (HankelFamily, ReconstructionError, bargmann_reconstruct, choose_stencil,
                          marchenko_reconstruct, partial_data_reconstruct, partial_setup,
                          plus_kernel, stencil_grid, truncation_csv, truncation_study)
from .scenario import Scenario, ScenarioError, load
from .verify import run_suites, write_report
from .weyl import G_contour, WeylError, coeffs_from_m, m_functions

log = logging.getLogger("steplike")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (ScatteringError, WeylError, KernelError, OperatorError, ReconstructionError,
                  PotentialError, np.linalg.LinAlgError, FloatingPointError)


class RunContext:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, sc: Scenario, out: Path, threads: int):
        self.sc = sc
        self.out = out
        self.threads = threads
        self.outputs: list[str] = []
        self.summary: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, columns: dict) -> Path:
        p = io.write_csv(self.out / name, columns)
        self.outputs.append(name)
        return p

    def plot(self, name: str, columns: dict) -> Path:
        """Whitespace-separated numeric columns with a commented header."""
        names = list(columns)
        data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + " ".join(names) + "\n")
            for row in data:
                fh.write(" ".join(io.fmt(v) for v in row) + "\n")
        self.outputs.append(name)
        return path

    def track(self, name: str):
        self.outputs.append(name)

    def manifest(self, extra: dict | None = None) -> Path:
        sc = self.sc
        body = {"name": sc.name, "mode": sc.mode, "version": __version__,
                "seed": sc.knobs.get("seed", 0), "knobs": sc.resolved(),
                "threads": self.threads, "potential": sc.potential.to_dict(),
                "outputs": sorted(set(self.outputs)), "summary": self.summary}
        try:
            body["contour_params"] = contour_params(sc.potential,
                                                    float(sc.knobs["contour"]["margin"])).as_dict()
        except PotentialError as exc:
            body["contour_params"] = {"error": str(exc)}
        try:
            rep = classify(sc.potential)
            body["norms"] = {k: v for k, v in vars(rep).items() if k != "admissible_flags"}
            body["norms"]["admissible"] = rep.admissible
        except PotentialError as exc:
            body["norms"] = {"error": str(exc)}
        if extra:
            body.update(extra)
        path = self.out / "manifest.json"
        path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _h(sc: Scenario) -> float:
    c = sc.knobs["contour"]
    return contour_params(sc.potential, float(c["margin"])).h if c["h"] == "auto" else float(c["h"])


def _contour_samples(sc: Scenario) -> ContourSamples:
    c = sc.knobs["contour"]
    if c.get("G_file"):
        path = Path(c["G_file"])
        if sc.source is not None and not path.is_absolute():
            path = sc.source / path
        return ContourSamples.from_csv(path, "G")
    grid = ContourGrid.uniform_grid(_h(sc), float(c["A"]), float(c["d_alpha"]))
    return sample(lambda k: G_contour(sc.potential, k), grid)


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def run_forward(ctx: RunContext):
    sc, q = ctx.sc, ctx.sc.potential
    f = sc.knobs["forward"]
    k = symmetric_real_grid(float(f["dk"]), float(f["K"]))
    kr = k.k.real
    try:
        numerical_support(q)
        T, L, R, _ = scatter(q, k)
        bs = bound_states(q)
        ctx.csv("forward_real.csv", {"k": kr, "re_T": T.real, "im_T": T.imag, "re_L": L.real,
                                     "im_L": L.imag, "re_R": R.real, "im_R": R.imag,
                                     "unitarity": np.abs(T) ** 2 + np.abs(R) ** 2 - 1})
        ctx.csv("bound_states.csv", {"kappa": [b[0] for b in bs], "c": [b[1] for b in bs]})
        ctx.plot("plot_reflection.dat", {"k": kr, "abs_R": np.abs(R), "abs_T": np.abs(T)})
        ctx.summary.update(n_bound_states=len(bs), max_abs_R=float(np.abs(R).max()),
                           max_unitarity_defect=float(np.abs(np.abs(T) ** 2 + np.abs(R) ** 2 - 1).max()))
    except PotentialError as exc:
        log.info("skipping full-line scattering: %s", exc)
        ctx.summary["full_line"] = f"skipped: {exc}"
    qp = q.plus()
    Tp, Lp, Rp, _ = scatter(qp, k)
    bsp = bound_states(qp)
    ctx.csv("forward_plus_real.csv", {"k": kr, "re_T_plus": Tp.real, "im_T_plus": Tp.imag,
                                      "re_L_plus": Lp.real, "im_L_plus": Lp.imag,
                                      "re_R_plus": Rp.real, "im_R_plus": Rp.imag})
    ctx.csv("bound_states_plus.csv", {"kappa": [b[0] for b in bsp], "c": [b[1] for b in bsp]})
    h = _h(sc)
    a = np.linspace(-float(f["K"]), float(f["K"]), int(f["contour_samples"]))
    ms = m_functions(q, WaveNumber.contour(a, h))
    c = coeffs_from_m(ms)
    G = G_contour(q, WaveNumber.contour(a, h))
    ms.to_csv(ctx.out / "m_functions.csv")
    ctx.track("m_functions.csv")
    ctx.csv("contour_coefficients.csv", {"alpha": a, "h": np.full(a.size, h),
                                         "re_R_minus": c.R_minus.real, "im_R_minus": c.R_minus.imag,
                                         "re_L_plus": c.L_plus.real, "im_L_plus": c.L_plus.imag,
                                         "re_T_plus": c.T_plus.real, "im_T_plus": c.T_plus.imag,
                                         "re_G": G.real, "im_G": G.imag})
    ctx.plot("plot_contour.dat", {"alpha": a, "abs_R_minus": np.abs(c.R_minus),
                                  "abs_L_plus": np.abs(c.L_plus), "abs_T_plus": np.abs(c.T_plus)})
    if f.get("G_samples"):
        _contour_samples(sc).to_csv(ctx.out / "contour_G.csv")
        ctx.track("contour_G.csv")
    ctx.summary.update(h=h, n_bound_states_plus=len(bsp),
                       max_abs_R_minus=float(np.abs(c.R_minus).max()),
                       max_abs_L_plus=float(np.abs(c.L_plus).max()),
                       max_abs_T_plus=float(np.abs(c.T_plus).max()))


def _x_range(sc: Scenario):
    r = sc.knobs["reconstruct"]
    return float(r["x_min"]), float(r["x_max"]), float(r["dx"])


def _stencil_knob(sc):
    s = sc.knobs["reconstruct"]["stencil"]
    return "auto" if s == "auto" else int(s)


def _emit_run(ctx: RunContext, run, label: str):
    q = ctx.sc.potential
    run.attach_truth(q)
    run.to_csv(ctx.out / f"reconstruction_{label}.csv")
    ctx.track(f"reconstruction_{label}.csv")
    run.logdet_csv(ctx.out / f"logdet_{label}.csv")
    ctx.track(f"logdet_{label}.csv")
    ctx.plot(f"plot_q_{label}.dat", {"x": run.x_rec, "q_true": run.q_true, "q_rec": run.q_rec})
    ctx.plot(f"plot_logdet_{label}.dat", {"x": run.x_grid, "logdet": run.logdet})
    ctx.summary[f"sup_error_{label}"] = run.sup_error()


def run_reconstruct_classical(ctx: RunContext):
    sc, q = ctx.sc, ctx.sc.potential
    x_lo, x_hi, dx = _x_range(sc)
    lo, hi = numerical_support(q)
    qk = sc.knobs["quadrature"]
    L = max(2 * (hi - x_lo) + 1.0, 4.0) if qk["L"] == "auto" else float(qk["L"])
    N = int(qk["N"])
    if qk["scheme"] == "cell":
        quad, _ = lattice_quadrature(N, dx, L)
    else:
        quad = Quadrature.gauss(N, L)
    st = choose_stencil(quad, dx, _stencil_knob(sc))
    xg = stencil_grid(x_lo, x_hi, dx, st)
    ra = sc.knobs["real_axis"]
    window = (2 * xg[0] - 1.0, 2 * quad.L + 2 * xg[-1] + 1.0)
    M = plus_kernel(q, window, float(ra["dk"]), float(ra["K"]))
    M.to_csv(ctx.out / "kernel_M.csv")
    ctx.track("kernel_M.csv")
    ctx.plot("plot_kernel_M.dat", {"s": M.s_grid, "M": M.values})
    fam = HankelFamily(M, quad)
    run = bargmann_reconstruct(fam, xg, dx, st, ctx.threads)
    _emit_run(ctx, run, "bargmann")
    gq = Quadrature.gauss(N, quad.L)
    xg5 = stencil_grid(x_lo, x_hi, dx, 5)
    run2 = marchenko_reconstruct(HankelFamily(M, gq), xg5, dx, ctx.threads)
    _emit_run(ctx, run2, "marchenko")
    ctx.summary.update(L=quad.L, N=N, scheme=quad.kind, stencil=st)


def run_reconstruct_partial(ctx: RunContext):
    sc, q = ctx.sc, ctx.sc.potential
    x_lo, x_hi, dx = _x_range(sc)
    qk = sc.knobs["quadrature"]
    L = None if qk["L"] == "auto" else float(qk["L"])
    Gs = _contour_samples(sc)
    ra = sc.knobs["real_axis"]
    Ns = [int(qk["N"])]
    if sc.knobs["reconstruct"].get("refine"):
        Ns.append(2 * Ns[0])
    M_plus = None
    errors = []
    for N in Ns:
        probe = stencil_grid(x_lo, x_hi, dx, 7)
        setup = partial_setup(q.plus(), Gs, float(probe[0]), float(probe[-1]), dx, N, L,
                              qk["scheme"], M_plus, float(ra["dk"]), float(ra["K"]))
        M_plus = setup.M_plus
        st = choose_stencil(setup.quad, dx, _stencil_knob(sc))
        xg = stencil_grid(x_lo, x_hi, dx, st)
        run = partial_data_reconstruct(q.plus(), Gs, xg, dx, stencil=st, threads=ctx.threads,
                                       setup=setup)
        label = f"partial_N{N}"
        _emit_run(ctx, run, label)
        d = run.diagnostics
        write_sweep_csv(ctx.out / f"determinant_sweep_N{N}.csv",
                        [{"x": x, "det": float(np.exp(ld)), "nuclear_norm": nn, "bound": b,
                          "condition_number": c}
                         for x, ld, nn, b, c in zip(run.x_grid, run.logdet, d["nuclear_norm"],
                                                    d["bound"], d["cond"])])
        ctx.track(f"determinant_sweep_N{N}.csv")
        errors.append(run.sup_error())
        ctx.summary[f"L_N{N}"] = setup.quad.L
        ctx.summary[f"stencil_N{N}"] = st
    base = setup.G
    base.to_csv(ctx.out / "kernel_G.csv")
    M_plus.to_csv(ctx.out / "kernel_M_plus.csv")
    ctx.track("kernel_G.csv")
    ctx.track("kernel_M_plus.csv")
    ctx.plot("plot_kernel_G.dat", {"t": base.s_grid, "G": base.values})
    ctx.plot("plot_kernel_M_plus.dat", {"t": M_plus.s_grid, "M_plus": M_plus.values})
    ctx.summary.update(h=Gs.grid.h, G_l1=Gs.l1_norm(), sup_errors=errors,
                       refinement_decreases=bool(len(errors) < 2 or errors[1] < errors[0]))


def run_truncation(ctx: RunContext):
    sc, q = ctx.sc, ctx.sc.potential
    t = sc.knobs["truncation"]
    qk = sc.knobs["quadrature"]
    rows = truncation_study(q, t["a_list"], float(t["x_probe"]), dx=float(sc.knobs["reconstruct"]["dx"]),
                            N=int(qk["N"]), L=None if qk["L"] == "auto" else float(qk["L"]),
                            scheme=qk["scheme"], A=float(t["A"]),
                            d_alpha=float(sc.knobs["contour"]["d_alpha"]))
    truncation_csv(ctx.out / "truncation.csv", rows)
    ctx.track("truncation.csv")
    ctx.plot("plot_truncation.dat", {"a": [r.a for r in rows], "delta_G_l1": [r.delta_G_l1 for r in rows],
                                     "delta_nuclear": [r.delta_nuclear for r in rows]})
    g = [r.delta_G_l1 for r in rows]
    n = [r.delta_nuclear for r in rows]
    ctx.summary.update(delta_G_l1=g, delta_nuclear=n,
                       non_increasing=bool(all(b <= a for a, b in zip(g, g[1:]))
                                           and all(b <= a for a, b in zip(n, n[1:]))))


def run_verify(ctx: RunContext) -> bool:
    sc = ctx.sc
    checks = run_suites(sc.potential, sc.knobs, sc.knobs["verify"]["suites"])
    write_report(ctx.out / "verify_report.csv", checks)
    ctx.track("verify_report.csv")
    (ctx.out / "verify_report.json").write_text(
        json.dumps(_jsonable([c.as_dict() for c in checks]), indent=2) + "\n", encoding="utf-8")
    ctx.track("verify_report.json")
    failed = [c for c in checks if not c.passed]
    ctx.summary.update(checks=len(checks), failed=len(failed),
                       skipped=sum(c.skipped for c in checks))
    for c in checks:
        status = "skip" if c.skipped else ("pass" if c.passed else "FAIL")
        log.info("%-4s %-22s %-45s value=%.3e tol=%.1e %s", status, c.suite, c.name, c.value,
                 c.tolerance, c.detail)
    return not failed


MODES = {"forward": run_forward, "reconstruct_classical": run_reconstruct_classical,
         "reconstruct_partial": run_reconstruct_partial, "truncation_sweep": run_truncation}


def execute(sc: Scenario, out: Path, threads: int = 1, verify_only: bool = False) -> int:
    ctx = RunContext(sc, out, threads)
    ok = True
    try:
        if verify_only or sc.mode == "verify":
            ok = run_verify(ctx)
        else:
            MODES[sc.mode](ctx)
    except NUMERIC_ERRORS as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        ctx.summary["error"] = f"{type(exc).__name__}: {exc}"
        ctx.manifest()
        return EXIT_NUMERIC
    ctx.manifest()
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steplike", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "execute the scenario's mode"),
                        ("verify", "run the invariant suites on the scenario's potential")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("scenario", type=Path)
        s.add_argument("--out", type=Path, default=None, help="output directory")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a knob, dotted keys (repeatable)")
        s.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return EXIT_CONFIG
    try:
        sc = load(args.scenario, args.override)
    except ScenarioError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = args.out or Path("out") / sc.name
    code = execute(sc, out, args.threads, verify_only=args.command == "verify")
    log.info("outputs in %s (exit %d)", out, code)
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
