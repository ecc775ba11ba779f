import json

import pytest

from steplike.scenario import DEFAULTS, ScenarioError, apply_overrides, from_dict, load, parse_override

BASE = {"mode": "verify", "potential": {"pieces": [{"shape": "square_well", "a": 0, "b": 1,
                                                    "depth": -1}]}}


def test_defaults_fill_missing_sections():
    sc = from_dict(BASE)
    assert sc.knobs["quadrature"]["N"] == DEFAULTS["quadrature"]["N"]
    assert sc.knobs["contour"]["h"] == "auto"


def test_override_parses_yaml_values():
    path, value = parse_override("contour.A=1e3")
    assert path == ["contour", "A"] and value == 1000.0
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=[1, 2]", "c.d=auto"])
    assert cfg == {"a": {"b": [1, 2]}, "c": {"d": "auto"}}


@pytest.mark.parametrize("bad", ["noequals", "=3"])
def test_bad_override(bad):
    with pytest.raises(ScenarioError):
        parse_override(bad)


@pytest.mark.parametrize("over", ["quadrature.N=0", "contour.d_alpha=-1", "quadrature.scheme=spline",
                                  "reconstruct.stencil=9", "mode=nonsense", "contour.h=fast"])
def test_invalid_knobs_rejected(over):
    with pytest.raises(ScenarioError):
        from_dict(BASE, [over])


def test_reconstruct_modes_need_x_range():
    with pytest.raises(ScenarioError):
        from_dict({**BASE, "mode": "reconstruct_partial"})
    with pytest.raises(ScenarioError):
        from_dict({**BASE, "mode": "reconstruct_partial",
                   "reconstruct": {"x_min": -1.0, "x_max": 0.5}})
    sc = from_dict({**BASE, "mode": "reconstruct_partial",
                    "reconstruct": {"x_min": -1.0, "x_max": -0.5}})
    assert sc.mode == "reconstruct_partial"


def test_invalid_potential_is_a_scenario_error():
    with pytest.raises(ScenarioError):
        from_dict({"mode": "verify", "potential": {"pieces": [{"shape": "square_well", "a": 1, "b": 0}]}})


def test_load_yaml_and_json(tmp_path):
    (tmp_path / "s.yaml").write_text("mode: verify\npotential:\n  pieces: []\n")
    (tmp_path / "s.json").write_text(json.dumps(BASE))
    assert load(tmp_path / "s.yaml").mode == "verify"
    assert load(tmp_path / "s.json", ["name=x"]).name == "x"


def test_unreadable_file(tmp_path):
    with pytest.raises(ScenarioError):
        load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("mode: [unclosed\n")
    with pytest.raises(ScenarioError):
        load(tmp_path / "bad.yaml")
