"""
Scenario configuration: YAML parsing, presets, defaults and validation.

A configuration is a YAML mapping with the sections below; every key is
optional except ``scenario``.  Units are N, mm, s (stresses in MPa)::

    scenario: flat            # flat | tube | ellipse
    geometry:                 # flat: L, H, w ; tube: r_out, H, w ; ellipse: + aspect
      w: 0.01
    mesh:                     # flat: nx, ny_sub, ny_film, bottom_fix_ux ; tube/ellipse: ntheta, nr_sub, nr_film
      nx: 80
    material:                 # shared by both regions unless overridden
      gamma_s: 0.1            # substrate shear modulus
      modulus_ratio: 8        # film / substrate shear modulus
      J0: 1.01
      chi: 0.1
      film: {}                # per-region overrides of gamma, alpha, epsilon, M, J0, chi
      substrate: {}
    schedule: {ramp: 1.0, mu_bar: 0.0, t_end: 10.0, tau0: 0.02, tau_growth: 1.3, tau_max: 5.0}
    solver: {tol_rel: 1.0e-8, tol_abs: 1.0e-10, max_iter: 25, line_search: false}
    stability: {enabled: true, tol_g: 0.1}
    output: {dir: out, snapshot_every: 0, mesh_cache: null, plots: true}

Unknown keys are rejected with their key path and line number.
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constitutive import MATERIAL_DEFAULTS, MaterialParams
from .mesh import FILM, SUBSTRATE, MeshError, ellipse_axes

SCENARIOS = ("flat", "tube", "ellipse")

PRESETS = {
    "flat": {
        "geometry": {"L": 2.0, "H": 0.5, "w": 0.01},
        "mesh": {"nx": 80, "ny_sub": 20, "ny_film": 4, "grading": 1.0, "bottom_fix_ux": False},
        "material": {"modulus_ratio": 8.0},
    },
    "tube": {
        "geometry": {"r_out": 1.0, "H": 0.2, "w": 0.02},
        "mesh": {"ntheta": 240, "nr_sub": 12, "nr_film": 3, "grading": 1.0},
        "material": {"modulus_ratio": 10.0},
    },
    "ellipse": {
        "geometry": {"r_out": 1.0, "H": 0.2, "w": 0.02, "aspect": 1.2},
        "mesh": {"ntheta": 240, "nr_sub": 12, "nr_film": 3, "grading": 1.0},
        "material": {"modulus_ratio": 10.0},
    },
}

COMMON_DEFAULTS = {
    "material": {
        "gamma_s": 0.1,
        "J0": 1.01,
        "chi": 0.1,
        **MATERIAL_DEFAULTS,
        "film": {},
        "substrate": {},
    },
    "schedule": {"ramp": 1.0, "mu_bar": 0.0, "t_end": 10.0, "tau0": 0.02,
                 "tau_growth": 1.3, "tau_max": 5.0, "max_cuts": 10},
    "solver": {"tol_rel": 1e-8, "tol_abs": 1e-10, "max_iter": 25, "line_search": False},
    "stability": {"enabled": True, "tol_g": 0.1},
    "output": {"dir": "out", "snapshot_every": 0, "mesh_cache": None, "plots": True},
}

REGION_KEYS = ("gamma", "alpha", "epsilon", "M", "J0", "chi")

# parameter paths a sweep may vary
SWEEPABLE = (
    "geometry.w", "geometry.H", "geometry.L", "geometry.aspect", "geometry.r_out",
    "material.modulus_ratio", "material.gamma_s", "material.J0", "material.chi",
    "material.alpha", "material.epsilon", "material.M",
)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key path, ``line`` 1-based or None."""

    def __init__(self, message, path="", line=None):
        self.path = path
        self.line = line
        where = f"{path}: " if path else ""
        at = f" (line {line})" if line else ""
        super().__init__(f"{where}{message}{at}")


# -- YAML loading with line numbers ----------------------------------------------


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = {}
    lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        if key in out:
            raise ConfigError("duplicate key", str(key), knode.start_mark.line + 1)
        out[key] = loader.construct_object(vnode, deep=True)
        lines[key] = knode.start_mark.line + 1
    return _LineDict(out, lines)


class _LineDict(dict):
    def __init__(self, data, lines):
        super().__init__(data)
        self.lines = lines


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(mapping, key):
    return getattr(mapping, "lines", {}).get(key)


def load_yaml(text):
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"malformed YAML: {exc.problem}", "", line) from None
    if data is None:
        data = _LineDict({}, {})
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return data


# -- resolved configuration ------------------------------------------------------


@dataclass
class ScenarioConfig:
    scenario: str
    geometry: dict
    mesh: dict
    material: dict
    schedule: dict
    solver: dict
    stability: dict
    output: dict
    params: dict = field(default_factory=dict)  # region id -> MaterialParams

    def resolved(self):
        """Plain nested dict of every resolved setting (for provenance)."""
        return {
            "scenario": self.scenario,
            "geometry": dict(self.geometry),
            "mesh": dict(self.mesh),
            "material": copy.deepcopy(self.material),
            "schedule": dict(self.schedule),
            "solver": dict(self.solver),
            "stability": dict(self.stability),
            "output": dict(self.output),
        }

    def mesh_params(self):
        g, m = self.geometry, self.mesh
        if self.scenario == "flat":
            return dict(L=g["L"], H=g["H"], w=g["w"], nx=m["nx"], ny_sub=m["ny_sub"],
                        ny_film=m["ny_film"], grading=m["grading"], bottom_fix_ux=m["bottom_fix_ux"])
        if self.scenario == "tube":
            return dict(r_out=g["r_out"], H=g["H"], w=g["w"], ntheta=m["ntheta"],
                        nr_sub=m["nr_sub"], nr_film=m["nr_film"], grading=m["grading"])
        r_ref = g["r_out"] - g["H"] - g["w"]
        a, b = ellipse_axes(r_ref, g["aspect"])
        return dict(a=a, b=b, w=g["w"], r_out=g["r_out"], ntheta=m["ntheta"], nr_sub=m["nr_sub"],
                    nr_film=m["nr_film"], r_ref=r_ref, grading=m["grading"])

    def with_value(self, path, value):
        """Copy of this configuration with one dotted-path setting replaced and re-validated."""
        raw = self.resolved()
        section, key = path.split(".", 1)
        raw[section][key] = value
        return config_from_dict(raw)


def _merge(base, over, path, src):
    """Recursively overlay ``over`` onto ``base``; unknown keys are errors."""
    out = copy.deepcopy(base)
    for key, val in over.items():
        kp = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError("unknown key", kp, _line(over, key))
        if isinstance(base[key], dict):
            if val is None:
                val = {}
            if not isinstance(val, dict):
                raise ConfigError("expected a mapping", kp, _line(over, key))
            if key in ("film", "substrate"):
                for k in val:
                    if k not in REGION_KEYS:
                        raise ConfigError("unknown key", f"{kp}.{k}", _line(val, k))
                out[key] = dict(val)
            else:
                out[key] = _merge(base[key], val, kp, src)
        else:
            out[key] = val
    return out


def _number(d, key, path, lines, positive=False, nonneg=False, integer=False, allow_none=False):
    v = d[key]
    kp = f"{path}.{key}"
    line = lines.get(kp)
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", kp, line)
    if not np.isfinite(v):
        raise ConfigError("must be finite", kp, line)
    if integer and int(v) != v:
        raise ConfigError(f"expected an integer, got {v!r}", kp, line)
    if positive and not v > 0:
        raise ConfigError(f"must be > 0, got {v!r}", kp, line)
    if nonneg and v < 0:
        raise ConfigError(f"must be >= 0, got {v!r}", kp, line)
    d[key] = int(v) if integer else float(v)


def _collect_lines(data, path="", acc=None):
    acc = {} if acc is None else acc
    if isinstance(data, dict):
        for k, v in data.items():
            kp = f"{path}.{k}" if path else str(k)
            ln = _line(data, k)
            if ln:
                acc[kp] = ln
            _collect_lines(v, kp, acc)
    return acc


def config_from_dict(data):
    """Resolve presets and defaults and validate a configuration mapping."""
    lines = _collect_lines(data)
    if "scenario" not in data:
        raise ConfigError("missing required key", "scenario")
    scenario = data["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"must be one of {SCENARIOS}, got {scenario!r}", "scenario", lines.get("scenario"))
    base = copy.deepcopy(COMMON_DEFAULTS)
    preset = PRESETS[scenario]
    base["geometry"] = dict(preset["geometry"])
    base["mesh"] = dict(preset["mesh"])
    base["material"].update(preset["material"])
    base["scenario"] = scenario
    merged = _merge(base, data, "", data)

    g, m, mat = merged["geometry"], merged["mesh"], merged["material"]
    for k in g:
        _number(g, k, "geometry", lines, positive=True)
    for k in m:
        if k == "bottom_fix_ux":
            if not isinstance(m[k], bool):
                raise ConfigError("expected true/false", f"mesh.{k}", lines.get(f"mesh.{k}"))
            continue
        _number(m, k, "mesh", lines, positive=True, integer=(k != "grading"))
    for k in ("gamma_s", "modulus_ratio", "alpha", "epsilon", "M", "J0"):
        _number(mat, k, "material", lines, positive=True)
    _number(mat, "chi", "material", lines)
    s = merged["schedule"]
    for k in ("ramp", "t_end"):
        _number(s, k, "schedule", lines, nonneg=True)
    for k in ("tau0", "tau_max"):
        _number(s, k, "schedule", lines, positive=True)
    _number(s, "mu_bar", "schedule", lines, allow_none=True)
    _number(s, "tau_growth", "schedule", lines, positive=True)
    _number(s, "max_cuts", "schedule", lines, nonneg=True, integer=True)
    if s["tau_growth"] < 1.0:
        raise ConfigError("must be >= 1", "schedule.tau_growth", lines.get("schedule.tau_growth"))
    if s["t_end"] <= 0:
        raise ConfigError("must be > 0", "schedule.t_end", lines.get("schedule.t_end"))
    sv = merged["solver"]
    for k in ("tol_rel", "tol_abs"):
        _number(sv, k, "solver", lines, positive=True)
    _number(sv, "max_iter", "solver", lines, positive=True, integer=True)
    if not isinstance(sv["line_search"], bool):
        raise ConfigError("expected true/false", "solver.line_search", lines.get("solver.line_search"))
    st = merged["stability"]
    _number(st, "tol_g", "stability", lines, positive=True)
    if not isinstance(st["enabled"], bool):
        raise ConfigError("expected true/false", "stability.enabled", lines.get("stability.enabled"))
    out = merged["output"]
    _number(out, "snapshot_every", "output", lines, nonneg=True, integer=True)
    if not isinstance(out["dir"], str) or not out["dir"]:
        raise ConfigError("expected a non-empty path", "output.dir", lines.get("output.dir"))
    if not isinstance(out["plots"], bool):
        raise ConfigError("expected true/false", "output.plots", lines.get("output.plots"))
    if out["mesh_cache"] is not None and (not isinstance(out["mesh_cache"], str) or not out["mesh_cache"]):
        raise ConfigError("expected a directory path or null", "output.mesh_cache", lines.get("output.mesh_cache"))

    params = {}
    for rid, name in ((SUBSTRATE, "substrate"), (FILM, "film")):
        over = mat[name]
        gamma = mat["gamma_s"] * (mat["modulus_ratio"] if rid == FILM else 1.0)
        kw = dict(gamma=gamma, alpha=mat["alpha"], epsilon=mat["epsilon"], M=mat["M"],
                  J0=mat["J0"], chi=mat["chi"])
        kw.update(over)
        try:
            params[rid] = MaterialParams(**{k: float(v) for k, v in kw.items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), f"material.{name}", lines.get(f"material.{name}")) from None

    cfg = ScenarioConfig(scenario, g, m, mat, s, sv, st, out, params)
    # geometry/mesh preconditions are checked by building the mesh lazily; catch
    # the cheap ones here so nothing is computed on an invalid configuration.
    _check_geometry(cfg, lines)
    return cfg


def _check_geometry(cfg, lines):
    g, m = cfg.geometry, cfg.mesh
    needed = {"flat": ("L", "H", "w"), "tube": ("r_out", "H", "w"), "ellipse": ("r_out", "H", "w", "aspect")}
    for k in needed[cfg.scenario]:
        if k not in g:
            raise ConfigError("missing required key", f"geometry.{k}")
    extra = set(g) - set(needed[cfg.scenario])
    if extra:
        k = sorted(extra)[0]
        raise ConfigError(f"not a {cfg.scenario} geometry key", f"geometry.{k}", lines.get(f"geometry.{k}"))
    mkeys = {"flat": ("nx", "ny_sub", "ny_film", "grading", "bottom_fix_ux")}.get(cfg.scenario, ("ntheta", "nr_sub", "nr_film", "grading"))
    extra = set(m) - set(mkeys)
    if extra:
        k = sorted(extra)[0]
        raise ConfigError(f"not a {cfg.scenario} mesh key", f"mesh.{k}", lines.get(f"mesh.{k}"))
    try:
        if cfg.scenario == "flat":
            if g["w"] >= g["H"]:
                raise MeshError("film thickness w must be smaller than H")
            if m["nx"] % 2:
                raise MeshError("nx must be even")
            if m["ny_film"] < 2:
                raise MeshError("ny_film must be >= 2")
        else:
            if g["w"] + g["H"] >= g["r_out"]:
                raise MeshError("w + H must be smaller than r_out")
            if m["ntheta"] < 16 or m["ntheta"] % 2:
                raise MeshError("ntheta must be even and >= 16")
            if cfg.scenario == "ellipse" and g["aspect"] < 1.0:
                raise MeshError("aspect ratio a/b must be >= 1")
    except MeshError as exc:
        raise ConfigError(str(exc), "geometry") from None


def parse_config(text):
    """Parse and validate a YAML scenario configuration."""
    return config_from_dict(load_yaml(text))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- sweeps --------------------------------------------------------------------


@dataclass
class SweepSpec:
    parameter: str
    values: list
    columns: tuple = ("value", "g_c", "N_c", "t_c", "bracket_width", "status")


def parse_sweep(text):
    """Parse a sweep specification::

        parameter: geometry.w
        values: [0.01, 0.02, 0.04]
    """
    data = load_yaml(text)
    lines = _collect_lines(data)
    for k in data:
        if k not in ("parameter", "values"):
            raise ConfigError("unknown key", str(k), lines.get(str(k)))
    if "parameter" not in data:
        raise ConfigError("missing required key", "parameter")
    p = data["parameter"]
    if not isinstance(p, str) or p not in SWEEPABLE:
        raise ConfigError(f"must be one of {SWEEPABLE}", "parameter", lines.get("parameter"))
    vals = data.get("values")
    if not isinstance(vals, list) or not vals:
        raise ConfigError("must be a non-empty list", "values", lines.get("values"))
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ConfigError(f"expected finite numbers, got {v!r}", "values", lines.get("values"))
    diff = np.diff(np.asarray(vals, dtype=float))
    if len(diff) and not (np.all(diff > 0) or np.all(diff < 0)):
        raise ConfigError("values must be strictly monotone", "values", lines.get("values"))
    return SweepSpec(p, [float(v) for v in vals])


def load_sweep(path):
    with open(path, encoding="utf-8") as fh:
        return parse_sweep(fh.read())
