import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from steplike import io
from steplike.cli import main

ROOT = Path(__file__).resolve().parents[1]
SCEN = ROOT / "scenarios"

# reduced k ranges keep these runs short; the kernel warns about them
pytestmark = pytest.mark.filterwarnings("ignore:real-axis k range")


def run(*args):
    return main([str(a) for a in args])


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def test_verify_zero_potential_exits_zero(tmp_path):
    assert run("verify", SCEN / "zero_verify.yaml", "--out", tmp_path, "-q") == 0
    with open(tmp_path / "verify_report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) > 5 and all(r["passed"] == "true" for r in rows)
    assert json.loads((tmp_path / "manifest.json").read_text())["summary"]["failed"] == 0


def test_missing_and_invalid_scenarios_exit_two(tmp_path):
    assert run("run", tmp_path / "nope.yaml", "-q") == 2
    assert run("run", SCEN / "zero_verify.yaml", "--override", "quadrature.N=-3", "-q") == 2
    assert run("run", SCEN / "zero_verify.yaml", "--override", "mode=fly", "-q") == 2
    assert run("run", SCEN / "zero_verify.yaml", "--threads", "0", "-q") == 2


def test_numerical_failure_exits_three(tmp_path):
    # 20 cells of width at most 2dx cannot span the required half-line
    code = run("run", SCEN / "headline_partial.yaml", "--out", tmp_path, "-q",
               "--override", "quadrature.N=20", "--override", "contour.A=500")
    assert code == 3
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert "cannot reach" in man["summary"]["error"]


def test_failed_check_exits_three(tmp_path, monkeypatch):
    from steplike import verify

    def failing(q, knobs):
        return [verify._check("fake", "always", 1.0, 0.0)]

    monkeypatch.setitem(verify.SUITES, "unitarity", failing)
    assert run("verify", SCEN / "zero_verify.yaml", "--out", tmp_path, "-q",
               "--override", "verify.suites=[unitarity]") == 3
    assert (tmp_path / "verify_report.csv").exists()


def test_forward_soliton(tmp_path):
    assert run("run", SCEN / "soliton_forward.yaml", "--out", tmp_path, "-q",
               "--override", "forward.K=10") == 0
    d = io.read_csv(tmp_path / "forward_real.csv")
    assert np.max(np.hypot(d["re_R"], d["im_R"])) < 1e-8
    bs = io.read_csv(tmp_path / "bound_states.csv")
    assert bs["kappa"].size == 1 and bs["kappa"][0] == pytest.approx(1.0, abs=1e-8)
    assert (tmp_path / "plot_reflection.dat").read_text().startswith("# k abs_R abs_T")


def test_outputs_are_bit_identical(tmp_path):
    args = (SCEN / "well_classical.yaml", "-q", "--override", "real_axis.K=500",
            "--override", "quadrature.N=100", "--override", "reconstruct.x_min=-0.2",
            "--override", "reconstruct.x_max=0.2")
    assert run("run", *args, "--out", tmp_path / "a") == 0
    assert run("run", *args, "--out", tmp_path / "b", "--threads", "2") == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "reconstruction_bargmann.csv" in files and "kernel_M.csv" in files
    for name in files:
        if name == "manifest.json":
            continue
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_manifest_lists_every_knob(tmp_path):
    assert run("verify", SCEN / "zero_verify.yaml", "--out", tmp_path, "-q",
               "--override", "verify.suites=[bound_states]") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    from steplike.scenario import DEFAULTS
    keys = dict(_flatten(man["knobs"]))
    for key, _ in _flatten(DEFAULTS):
        assert key in keys
    assert {"h", "beta", "gamma_minus", "gamma_plus"} <= set(man["contour_params"])
    assert "l1_plus" in man["norms"]


def test_partial_square_well_has_error_column(tmp_path):
    code = run("run", SCEN / "headline_partial.yaml", "--out", tmp_path, "-q",
               "--override", "contour.A=2000", "--override", "real_axis.K=2000",
               "--override", "reconstruct.x_min=-1.6", "--override", "reconstruct.x_max=-1.4",
               "--override", "reconstruct.refine=false")
    assert code == 0
    d = io.read_csv(tmp_path / "reconstruction_partial_N200.csv")
    assert {"x", "q_rec", "q_true", "error", "cond", "nuclear_norm"} <= set(d)
    assert np.max(np.abs(d["error"])) < 5e-3
    for name in ("plot_q_partial_N200.dat", "plot_kernel_G.dat", "plot_logdet_partial_N200.dat",
                 "determinant_sweep_N200.csv"):
        assert (tmp_path / name).exists()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "steplike", "verify", str(SCEN / "zero_verify.yaml"),
                          "--out", str(tmp_path), "-q", "--override", "verify.suites=[unitarity]"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr


def test_contour_samples_can_be_ingested(tmp_path):
    fwd = tmp_path / "fwd"
    assert run("run", SCEN / "headline_partial.yaml", "--out", fwd, "-q",
               "--override", "mode=forward", "--override", "forward.G_samples=true",
               "--override", "forward.K=5", "--override", "forward.contour_samples=11",
               "--override", "contour.A=2000") == 0
    assert (fwd / "contour_G.csv").exists()
    common = ["--override", "real_axis.K=2000", "--override", "reconstruct.x_min=-1.6",
              "--override", "reconstruct.x_max=-1.5", "--override", "reconstruct.refine=false",
              "--override", "contour.A=2000"]
    assert run("run", SCEN / "headline_partial.yaml", "--out", tmp_path / "a", "-q", *common) == 0
    assert run("run", SCEN / "headline_partial.yaml", "--out", tmp_path / "b", "-q", *common,
               "--override", f"contour.G_file={fwd / 'contour_G.csv'}") == 0
    a = io.read_csv(tmp_path / "a" / "reconstruction_partial_N200.csv")
    b = io.read_csv(tmp_path / "b" / "reconstruction_partial_N200.csv")
    np.testing.assert_allclose(b["q_rec"], a["q_rec"], atol=1e-9)
