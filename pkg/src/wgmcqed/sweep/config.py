"""Sweep configuration: a TOML file plus ``key=value`` overrides.

Grammar (all tables optional, defaults shown by ``default_config()``)::

    [geometry]
    D = [16, 18, 20]                 # um; list or {start, stop, num}
    d = [4, 3, 2, 1.5, 1, 0.75]      # um; "sphere" entries mean d = D
    polarizations = ["TM", "TE"]

    [transition]   gamma_perp_mhz, wavelength_nm, label
    [material]     interior_index ("fused_silica" or a number), exterior_index, q_material
    [solver]       per_wavelength, far_per_wavelength, grading, core_scale,
                   box_width, box_height, pml_thickness, pml_strength,
                   penalty, n_eigs, arpack_tol, maxiter, m_budget, convention,
                   quant_width, quant_height (mode-volume box, um)
    [water]        enabled, thickness_nm, absorption_per_m, index
    [output]       dir, format ("csv" | "json" | "both")
    [cache]        enabled, dir
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..analysis import EPS_WEIGHTED, UNWEIGHTED, QuantizationRegion
from ..fem.mesh import ResonatorGeometry
from ..fem.solver import SolverSettings
from ..physics import TWO_PI, AtomicTransition, MaterialModel
from .pipeline import PipelineSettings, WaterModel


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "geometry": {"D": [20.0], "d": [20.0], "polarizations": ["TM", "TE"]},
    "transition": {"gamma_perp_mhz": 2.61, "wavelength_nm": 852.359, "label": "Cs D2"},
    "material": {"interior_index": "fused_silica", "exterior_index": 1.0, "q_material": 2.4e10},
    "solver": {
        **SolverSettings().as_dict(),
        "m_budget": 15,
        "convention": EPS_WEIGHTED,
        "quant_width": QuantizationRegion().width,
        "quant_height": QuantizationRegion().height,
    },
    "water": {"enabled": False, "thickness_nm": 0.2, "absorption_per_m": 4.3, "index": 1.33},
    "output": {"dir": "wgmcqed-out", "format": "both"},
    "cache": {"enabled": True, "dir": ""},
}

_SOLVER_FIELDS = set(SolverSettings.__dataclass_fields__)


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, extra: dict, path=""):
    for k, v in extra.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a table")
            _merge(base[k], v, where + ".")
        else:
            base[k] = v


def parse_value(text: str):
    """TOML scalar/array syntax, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, _, value = item.partition("=")
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown configuration table in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {key!r}")
    node[parts[-1]] = parse_value(value.strip())


def load_config(path=None, overrides=(), base: dict | None = None) -> dict:
    cfg = copy.deepcopy(base) if base is not None else default_config()
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    validate(cfg)
    return cfg


def _expand(values, name):
    if isinstance(values, dict):
        try:
            arr = np.linspace(float(values["start"]), float(values["stop"]), int(values["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name} range needs start, stop, num") from exc
        return [float(round(v, 10)) for v in arr]
    if isinstance(values, (int, float, str)):
        values = [values]
    return list(values)


@dataclass(frozen=True)
class SweepConfig:
    geometries: tuple  # ResonatorGeometry, ordered by (D, d)
    polarizations: tuple
    transition: AtomicTransition
    material: MaterialModel
    pipeline: PipelineSettings
    output_dir: str
    output_format: str
    cache_enabled: bool
    cache_dir: str | None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def grid(self):
        return [(g, p) for g in self.geometries for p in self.polarizations]


def validate(cfg: dict):
    geo = cfg["geometry"]
    Ds = _expand(geo["D"], "geometry.D")
    ds = _expand(geo["d"], "geometry.d")
    if not Ds or not ds:
        raise ConfigError("geometry grid is empty")
    for D in Ds:
        if not (isinstance(D, (int, float)) and D > 0):
            raise ConfigError(f"principal diameter {D!r} must be a positive number")
    for d in ds:
        if d != "sphere" and not (isinstance(d, (int, float)) and d > 0):
            raise ConfigError(f"minor diameter {d!r} must be positive or 'sphere'")
    pols = geo["polarizations"]
    if isinstance(pols, str):
        pols = [pols]
    if not pols or any(p not in ("TE", "TM") for p in pols):
        raise ConfigError("polarizations must be drawn from TE, TM")
    s = cfg["solver"]
    if s["convention"] not in (EPS_WEIGHTED, UNWEIGHTED):
        raise ConfigError(f"solver.convention must be {EPS_WEIGHTED} or {UNWEIGHTED}")
    if not 4 <= s["per_wavelength"] <= 40:
        raise ConfigError("solver.per_wavelength must lie in [4, 40]")
    if not 1 <= int(s["n_eigs"]) <= 40:
        raise ConfigError("solver.n_eigs must lie in [1, 40]")
    if not 0 < s["pml_thickness"] <= 10:
        raise ConfigError("solver.pml_thickness must lie in (0, 10] um")
    if not (s["quant_width"] > 0 and s["quant_height"] > 0):
        raise ConfigError("quantization box must have positive size")
    if s["quant_width"] > s["box_width"] or s["quant_height"] > s["box_height"]:
        raise ConfigError("quantization box must fit inside the solver box")
    if int(s["m_budget"]) < 1:
        raise ConfigError("solver.m_budget must be >= 1")
    if cfg["output"]["format"] not in ("csv", "json", "both"):
        raise ConfigError("output.format must be csv, json or both")
    t = cfg["transition"]
    if not (t["gamma_perp_mhz"] > 0 and t["wavelength_nm"] > 0):
        raise ConfigError("transition rates and wavelength must be positive")


def build(cfg: dict) -> SweepConfig:
    validate(cfg)
    geo = cfg["geometry"]
    mat = cfg["material"]
    try:
        material = MaterialModel(mat["interior_index"], float(mat["exterior_index"]), float(mat["q_material"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"material: {exc}") from exc
    geoms = []
    for D in _expand(geo["D"], "geometry.D"):
        for d in _expand(geo["d"], "geometry.d"):
            dd = float(D) if d == "sphere" else float(d)
            if dd > D:
                raise ConfigError(f"minor diameter {dd} exceeds principal diameter {D}")
            geoms.append(ResonatorGeometry(float(D), dd, material))
    geoms = sorted(set(geoms), key=lambda g: (g.principal_diameter, g.minor_diameter))
    pols = geo["polarizations"]
    pols = tuple(sorted([pols] if isinstance(pols, str) else pols))
    t = cfg["transition"]
    transition = AtomicTransition(TWO_PI * float(t["gamma_perp_mhz"]) * 1e6, float(t["wavelength_nm"]) * 1e-9,
                                  str(t["label"]))
    s = cfg["solver"]
    solver = SolverSettings(**{k: (int(v) if k in ("n_eigs", "maxiter") else float(v))
                               for k, v in s.items() if k in _SOLVER_FIELDS})
    w = cfg["water"]
    water = WaterModel(bool(w["enabled"]), float(w["thickness_nm"]) * 1e-9, float(w["absorption_per_m"]),
                       float(w["index"]))
    pipeline = PipelineSettings(
        solver=solver,
        m_budget=int(s["m_budget"]),
        region=QuantizationRegion(float(s["quant_width"]), float(s["quant_height"])),
        convention=s["convention"],
        water=water,
    )
    c = cfg["cache"]
    return SweepConfig(
        geometries=tuple(geoms),
        polarizations=pols,
        transition=transition,
        material=material,
        pipeline=pipeline,
        output_dir=str(cfg["output"]["dir"]),
        output_format=cfg["output"]["format"],
        cache_enabled=bool(c["enabled"]),
        cache_dir=str(c["dir"]) or None,
        raw=copy.deepcopy(cfg),
    )
