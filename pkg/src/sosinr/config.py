"""YAML run configuration: schema, defaults and builders for domain objects.

Lengths are given in millimetres and frequencies in MHz (the key names carry
the unit); everything is converted to SI on load. See ``DEFAULTS`` for the
full key set. ``seed``, ``geometry``, ``pulse`` and ``grid`` are required.
"""

from __future__ import annotations

import copy
from pathlib import Path

import jsonschema
import yaml

from .core import ArrayGeometry, ImagingGrid, PulseModel, Seed, SoSGrid
from .simulate import Inclusion, PhantomSpec

REQUIRED = ("seed", "geometry", "pulse", "grid")

DEFAULTS = {
    "geometry": {"elements": 32, "pitch_mm": 0.45},
    "pulse": {
        "center_frequency_mhz": 5.0,
        "sampling_frequency_mhz": 25.0,
        "fractional_bandwidth": 0.6,
        "pulse_cycles": 2.0,
    },
    "grid": {"origin_mm": [-10.0, 1.0], "n_lateral": 20, "n_depth": 30, "spacing_mm": [1.0, 1.0]},
    "simulation": {"n_samples": 2048, "scatterer_density_per_mm2": 4.0},
    "phantoms": [],
    "beamforming": {
        "f_number": 1.0,
        "pixel_grid": {"origin_mm": [-7.0, 5.0], "n_lateral": 29, "n_depth": 51, "spacing_mm": [0.5, 0.5]},
    },
    "estimation": {
        "mode": "inr",
        "epochs": 1000,
        "alpha": 0.01,
        "lr": 0.001,
        "c0": 1540.0,
        "clamp": [1300.0, 1800.0],
        "phase_lag": 8,
        "checkpoint_every": 0,
    },
    "network": {"hidden_layers": 3, "hidden_units": 128, "omega": 30.0, "output_scale": 100.0},
}

_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_grid = {
    "type": "object",
    "required": ["origin_mm", "n_lateral", "n_depth", "spacing_mm"],
    "additionalProperties": False,
    "properties": {
        "origin_mm": _pair,
        "n_lateral": {"type": "integer", "minimum": 2},
        "n_depth": {"type": "integer", "minimum": 2},
        "spacing_mm": {**_pair, "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

SCHEMA = {
    "type": "object",
    "required": list(REQUIRED),
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "geometry": {
            "type": "object",
            "required": ["elements", "pitch_mm"],
            "additionalProperties": False,
            "properties": {
                "elements": {"type": "integer", "minimum": 2},
                "pitch_mm": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "pulse": {
            "type": "object",
            "required": ["center_frequency_mhz", "sampling_frequency_mhz"],
            "additionalProperties": False,
            "properties": {
                "center_frequency_mhz": {"type": "number", "exclusiveMinimum": 0},
                "sampling_frequency_mhz": {"type": "number", "exclusiveMinimum": 0},
                "fractional_bandwidth": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "pulse_cycles": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "grid": _grid,
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 8},
                "scatterer_density_per_mm2": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "phantoms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "background_sos": {"type": "number", "minimum": 1300, "maximum": 1800},
                    "inclusions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["center_mm", "diameter_mm", "sos"],
                            "additionalProperties": False,
                            "properties": {
                                "center_mm": _pair,
                                "diameter_mm": {"type": "number", "exclusiveMinimum": 0},
                                "sos": {"type": "number", "minimum": 1300, "maximum": 1800},
                            },
                        },
                    },
                },
            },
        },
        "beamforming": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f_number": {"type": "number", "exclusiveMinimum": 0},
                "pixel_grid": {"oneOf": [_grid, {"type": "null"}]},
            },
        },
        "estimation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["inr", "grid_baseline"]},
                "epochs": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "c0": {"type": "number", "minimum": 1300, "maximum": 1800},
                "clamp": _pair,
                "phase_lag": {"type": "integer", "minimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 0},
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden_layers": {"type": "integer", "minimum": 1},
                "hidden_units": {"type": "integer", "minimum": 1},
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "output_scale": {"type": "number"},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Check ``raw`` against the schema and return it merged over ``DEFAULTS``."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key '{key}'")
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    cfg = _merge(DEFAULTS, raw)
    lo, hi = cfg["estimation"]["clamp"]
    if not lo < hi:
        raise ConfigError("estimation.clamp: min must be below max")
    try:
        grid = build_grid(cfg)
        build_geometry(cfg)
        build_pulse(cfg)
        for i, _ in enumerate(cfg["phantoms"]):
            build_phantom(cfg, i).validate(grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    names = [p["name"] for p in cfg["phantoms"]]
    if len(set(names)) != len(names):
        raise ConfigError("phantoms: names must be unique")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return validate(raw)


def _grid_from(d: dict) -> ImagingGrid:
    ox, oz = d["origin_mm"]
    sx, sz = d["spacing_mm"]
    return ImagingGrid((ox * 1e-3, oz * 1e-3), d["n_lateral"], d["n_depth"], sx * 1e-3, sz * 1e-3)


def build_grid(cfg: dict) -> ImagingGrid:
    return _grid_from(cfg["grid"])


def build_pixel_grid(cfg: dict) -> ImagingGrid | None:
    pg = cfg["beamforming"].get("pixel_grid")
    return _grid_from(pg) if pg else None


def build_geometry(cfg: dict) -> ArrayGeometry:
    g = cfg["geometry"]
    return ArrayGeometry.linear(g["elements"], g["pitch_mm"] * 1e-3)


def build_pulse(cfg: dict) -> PulseModel:
    p = cfg["pulse"]
    return PulseModel(p["center_frequency_mhz"] * 1e6, p["sampling_frequency_mhz"] * 1e6,
                      p["fractional_bandwidth"], p["pulse_cycles"])


def build_phantom(cfg: dict, index: int) -> PhantomSpec:
    p = cfg["phantoms"][index]
    incs = tuple(
        Inclusion((i["center_mm"][0] * 1e-3, i["center_mm"][1] * 1e-3), i["diameter_mm"] * 0.5e-3, float(i["sos"]))
        for i in p.get("inclusions", [])
    )
    return PhantomSpec(float(p.get("background_sos", 1540.0)), incs, cfg["simulation"]["scatterer_density_per_mm2"])


def build_seed(cfg: dict) -> Seed:
    return Seed(cfg["seed"])


def build_c0(cfg: dict) -> SoSGrid:
    return SoSGrid.constant(build_grid(cfg), cfg["estimation"]["c0"])


def network_layers(cfg: dict) -> tuple[int, ...]:
    n = cfg["network"]
    return (2,) + (n["hidden_units"],) * n["hidden_layers"] + (1,)
