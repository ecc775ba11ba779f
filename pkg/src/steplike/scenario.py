"""Scenario files: a potential, a mode and numeric knobs in YAML or JSON."""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .potential import Potential, PotentialError, from_config

MODES = ("forward", "reconstruct_classical", "reconstruct_partial", "verify", "truncation_sweep")

DEFAULTS: dict[str, Any] = {
    "name": "scenario",
    "seed": 0,
    "contour": {"h": "auto", "margin": 0.25, "A": 2.0e4, "d_alpha": 0.25},
    "real_axis": {"dk": 0.02, "K": 2.0e4},
    "forward": {"dk": 0.05, "K": 50.0, "contour_samples": 2001},
    "quadrature": {"N": 200, "L": "auto", "scheme": "cell"},
    "reconstruct": {"x_min": None, "x_max": None, "dx": 0.02, "stencil": "auto", "refine": False},
    "kernels": {"s_max": 12.0},
    "truncation": {"a_list": [2.0, 4.0, 6.0, 8.0], "x_probe": -1.0, "A": 2.0e3},
    "verify": {"suites": "all"},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e3`` (no dot, no sign) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _yaml(text: str):
    return yaml.load(text, Loader=_Loader)


class ScenarioError(ValueError):
    """Unreadable or invalid scenario."""


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is parsed as YAML (numbers, lists, strings)."""
    if "=" not in item:
        raise ScenarioError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ScenarioError(f"override {item!r} has an empty key")
    try:
        value = _yaml(raw)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"override {item!r}: {exc}") from None
    return path, value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        path, value = parse_override(item)
        node = cfg
        for p in path[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[path[-1]] = value
    return cfg


def read_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else _yaml(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot parse scenario {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario {path} must be a mapping at top level")
    return data


def _positive(cfg: dict, section: str, key: str, allow_auto: bool = False):
    v = cfg[section][key]
    if allow_auto and v == "auto":
        return
    try:
        ok = float(v) > 0 and math.isfinite(float(v))
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ScenarioError(f"{section}.{key} must be positive, got {v!r}")


@dataclass
class Scenario:
    name: str
    mode: str
    potential: Potential
    knobs: dict
    source: Path | None = None

    def __getitem__(self, key):
        return self.knobs[key]

    def resolved(self) -> dict:
        """All knobs after defaults and overrides (for the manifest)."""
        return copy.deepcopy(self.knobs)


def validate(cfg: dict, base: Path | None = None) -> Scenario:
    mode = cfg.get("mode")
    if mode not in MODES:
        raise ScenarioError(f"mode must be one of {', '.join(MODES)}; got {mode!r}")
    if "potential" not in cfg:
        raise ScenarioError("scenario needs a 'potential' section")
    try:
        q = from_config(cfg["potential"], base)
    except PotentialError as exc:
        raise ScenarioError(f"invalid potential: {exc}") from None
    for key in ("margin", "A", "d_alpha"):
        _positive(cfg, "contour", key)
    _positive(cfg, "contour", "h", allow_auto=True)
    for key in ("dk", "K"):
        _positive(cfg, "real_axis", key)
        _positive(cfg, "forward", key)
    _positive(cfg, "quadrature", "N")
    _positive(cfg, "quadrature", "L", allow_auto=True)
    _positive(cfg, "reconstruct", "dx")
    if cfg["quadrature"]["scheme"] not in ("cell", "gauss"):
        raise ScenarioError("quadrature.scheme must be 'cell' or 'gauss'")
    if str(cfg["reconstruct"]["stencil"]) not in ("auto", "5", "7"):
        raise ScenarioError("reconstruct.stencil must be auto, 5 or 7")
    if mode in ("reconstruct_classical", "reconstruct_partial"):
        r = cfg["reconstruct"]
        if r.get("x_min") is None or r.get("x_max") is None:
            raise ScenarioError(f"mode {mode} needs reconstruct.x_min and reconstruct.x_max")
        if not float(r["x_min"]) <= float(r["x_max"]):
            raise ScenarioError("reconstruct.x_min must not exceed reconstruct.x_max")
        if mode == "reconstruct_partial" and float(r["x_max"]) >= 0:
            raise ScenarioError("reconstruct_partial needs x_max < 0")
    if mode == "truncation_sweep":
        a = cfg["truncation"]["a_list"]
        if not isinstance(a, list) or not a or any(float(v) <= 0 for v in a):
            raise ScenarioError("truncation.a_list must be a non-empty list of positive numbers")
    return Scenario(str(cfg.get("name", "scenario")), mode, q, cfg, base)


def load(path: str | Path, overrides=()) -> Scenario:
    path = Path(path)
    cfg = _merge(DEFAULTS, read_file(path))
    cfg = apply_overrides(cfg, overrides)
    try:
        return validate(cfg, path.parent)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario: {exc}") from None


def from_dict(cfg: Mapping, overrides=(), base: Path | None = None) -> Scenario:
    cfg = apply_overrides(_merge(DEFAULTS, cfg), overrides)
    return validate(cfg, base)
