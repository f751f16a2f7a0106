"""Run configuration: YAML file, JSON-schema validation, defaults and overrides.

A config names either a registered ``preset`` (with builder ``overrides``)
or declares a reaction-diffusion type ``model`` block::

    preset: allen-cahn-1d
    overrides: {sigma: 0.5, K: 16}
    solve: {T: 1.0, n_steps: 400, theta_implicit: 1.0, blowup_threshold: 1.0e6}
    u0: {scale: 1.0}
    seed: 0
    paths: 4
    jobs: 1
    out: out
    experiment: {kind: moments}

    model:
      triple: {d: 1, lengths: 1.0, K: 16}
      diffusion: 1.0
      reaction: [0, 1, 0, -1]        # power-series coefficients of f
      flux: [0, 0, 1]                # coefficients of fbar (optional)
      noise: {sigma: 0.5, n_channels: 4, b: [[0.0]]}
      levy: {intensities: [1, 1], amplitudes: [0.3, -0.3], c: [[0], [0]]}
      params: {beta_G: 0.75}         # optional GrowthParams overrides

The full schema is :data:`SCHEMA`.
"""
from __future__ import annotations

import copy
import re
from dataclasses import replace

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .equations import PRESETS, EquationPreset, build_preset, reaction_diffusion
from .solver import SolveConfig

__all__ = ["SCHEMA", "DEFAULTS", "ConfigError", "load_config", "resolve_config", "apply_override",
           "build_from_config", "solve_config", "initial_state", "dump_config", "parse_value"]


class ConfigError(ValueError):
    """The configuration cannot be parsed or violates the schema."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "levyspde run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string", "enum": sorted(PRESETS)},
        "overrides": {"type": "object"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["triple"],
            "properties": {
                "name": {"type": "string"},
                "triple": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["d", "K"],
                    "properties": {
                        "d": {"type": "integer", "enum": [1, 2]},
                        "lengths": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
                        "K": _int_pos,
                    },
                },
                "diffusion": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
                "reaction": {"type": ["array", "null"], "items": _num},
                "flux": {"type": ["array", "null"], "items": _num},
                "noise": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "sigma": {"type": "number", "minimum": 0},
                        "n_channels": {"type": "integer", "minimum": 0},
                        "b": _matrix,
                        "quadratic": {"type": "number"},
                    },
                },
                "levy": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "intensities": {"type": "array", "items": _pos},
                        "amplitudes": {"type": "array", "items": _num},
                        "c": _matrix,
                    },
                },
                "params": {"type": "object", "additionalProperties": _num},
            },
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": _pos,
                "n_steps": _int_pos,
                "theta_implicit": {"type": "number", "minimum": 0.5, "maximum": 1.0},
                "blowup_threshold": _pos,
                "truncation_lambda": {"oneOf": [_pos, {"type": "null"}]},
                "record_every": _int_pos,
                "jump_convention": {"enum": ["left_limit", "step_start"]},
            },
        },
        "u0": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scale": _num,
                "coefficients": {"type": ["array", "null"], "items": _num},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "paths": _int_pos,
        "jobs": {"type": "integer", "minimum": -1},
        "out": {"type": "string"},
        "strict": {"type": "boolean"},
        "modes": {"type": "boolean"},
        "dump_noise": {"type": "boolean"},
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["moments", "apriori", "contdep", "convergence"]},
                "scales": {"type": "array", "items": _num},
                "slack": _pos,
                "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "eps": {"type": "array", "items": _pos},
                "n_list": {"type": "array", "items": _int_pos},
                "ref_factor": _int_pos,
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 10}},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "object", "additionalProperties": {"type": "array", "items": _num}},
            },
        },
    },
    "not": {"required": ["preset", "model"]},
}

DEFAULTS = {
    "preset": "allen-cahn-1d",
    "overrides": {},
    "solve": {"T": 1.0, "n_steps": 400, "theta_implicit": 1.0, "blowup_threshold": 1.0e6,
              "truncation_lambda": None, "record_every": 1, "jump_convention": "left_limit"},
    "u0": {"scale": 1.0, "coefficients": None},
    "seed": 0,
    "paths": 1,
    "jobs": 1,
    "out": "levyspde-out",
    "strict": False,
    "modes": False,
    "dump_noise": False,
    "experiment": {"kind": "moments", "scales": [0.5, 1.0, 2.0, 4.0], "slack": 2.0,
                   "deltas": [0.5, 0.1, 0.02, 0.0], "eps": [0.1], "n_list": [16, 32, 64, 128],
                   "ref_factor": 16},
    "verify": {"criteria": list(range(1, 11))},
    "sweep": {"grid": {}},
}

_VALIDATOR = Draft202012Validator(SCHEMA)


def _validate(cfg: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a sign or dot (``1e6``, ``1.0e6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def parse_value(text: str):
    """Parse one YAML scalar or flow value as the config loader would."""
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {text!r}") from exc


def load_config(path) -> dict:
    """Parse a YAML config file (schema-checked, defaults not yet applied)."""
    try:
        with open(path) as fh:
            data = yaml.load(fh, Loader=_Loader)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    _validate(data)
    return data


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "overrides":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(data: dict | None = None, **flags) -> dict:
    """Defaults, then the file, then non-None flag values; validated."""
    cfg = _merge(DEFAULTS, data or {})
    if "model" in (data or {}):
        cfg.pop("preset", None)
    for k, v in flags.items():
        if v is not None:
            cfg = apply_override(cfg, k, v)
    _validate(cfg)
    return cfg


def apply_override(cfg: dict, key: str, value) -> dict:
    """Set a dotted ``key`` (e.g. ``solve.n_steps``) to ``value``."""
    out = copy.deepcopy(cfg)
    parts = key.split(".")
    node = out
    for p in parts[:-1]:
        if not isinstance(node.get(p, {}), dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section")
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def build_from_config(cfg: dict) -> EquationPreset:
    """Instantiate the configured preset or model declaration."""
    if "model" in cfg:
        return _model_block(cfg["model"])
    try:
        return build_preset(cfg["preset"], **cfg.get("overrides", {}))
    except TypeError as exc:
        raise ConfigError(f"bad override for preset {cfg['preset']}: {exc}") from exc


def _model_block(m: dict) -> EquationPreset:
    tr = m["triple"]
    noise = m.get("noise", {})
    levy = m.get("levy", {})
    preset = reaction_diffusion(
        tr["d"], tr.get("lengths", 1.0), tr["K"],
        reaction=m.get("reaction", [0.0, 1.0, 0.0, -1.0]), flux=m.get("flux"),
        a=m.get("diffusion", 1.0), b=noise.get("b"), c=levy.get("c"),
        sigma=noise.get("sigma", 0.0), n_noise=noise.get("n_channels", 4),
        jump_amps=levy.get("amplitudes", ()), jump_intensities=levy.get("intensities", ()),
        quadratic_noise=noise.get("quadratic", 0.0), name=m.get("name", "declared-model"),
    )
    if m.get("params"):
        try:
            params = replace(preset.model.params, **m["params"])
        except TypeError as exc:
            raise ConfigError(f"unknown growth parameter: {exc}") from exc
        preset.model = preset.model.replace(params=params)
        preset.expected_params = params
        preset.f_components = ()
    return preset


def solve_config(cfg: dict) -> SolveConfig:
    return SolveConfig(**cfg["solve"])


def initial_state(cfg: dict, preset: EquationPreset) -> np.ndarray:
    coeffs = cfg["u0"].get("coefficients")
    if coeffs is not None:
        u = np.asarray(coeffs, dtype=float)
        if u.shape != (preset.model.K,):
            raise ConfigError(f"u0.coefficients needs {preset.model.K} entries")
        return cfg["u0"]["scale"] * u
    return preset.u0(cfg["u0"]["scale"])

