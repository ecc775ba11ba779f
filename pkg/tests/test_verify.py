import numpy as np

from steplike import potential as P
from steplike.scenario import DEFAULTS, from_dict
from steplike.verify import SUITES, run_suites, write_report


def _knobs(**over):
    sc = from_dict({"mode": "verify", "potential": {"pieces": []}}, [f"{k}={v}" for k, v in over.items()])
    return sc.knobs


def test_zero_potential_passes_everything():
    checks = run_suites(P.zero(), _knobs())
    assert checks and all(c.passed for c in checks)
    assert {c.suite for c in checks} >= {"unitarity", "trace_bound", "contour_independence"}


def test_square_well_suites(headline):
    checks = run_suites(headline, _knobs(**{"contour.A": 2000.0, "real_axis.K": 2000.0}),
                        ["unitarity", "contour_bounds", "trace_bound", "contour_independence"])
    failed = [c for c in checks if not c.passed]
    assert not failed, failed


def test_crashing_suite_is_reported_as_failure(monkeypatch):
    def boom(q, knobs):
        raise RuntimeError("broken")

    monkeypatch.setitem(SUITES, "unitarity", boom)
    checks = run_suites(P.zero(), _knobs(), ["unitarity"])
    assert len(checks) == 1 and not checks[0].passed and "broken" in checks[0].detail


def test_skips_are_marked():
    q = P.constant(1.0, 0.0, P.INF)
    checks = run_suites(q, _knobs(), ["unitarity"])
    assert checks[0].skipped


def test_report_csv(tmp_path):
    checks = run_suites(P.zero(), _knobs(), ["route_consistency"])
    write_report(tmp_path / "r.csv", checks)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "suite,name,value,tolerance,passed,skipped,detail"
    assert len(lines) == 1 + len(checks)
