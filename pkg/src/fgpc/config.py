"""Experiment configuration: YAML documents checked against a JSON schema.

Schema errors carry the path to the offending key; consistency checks that
a schema cannot express (anti-aliasing, deflation invariants, parameter
names) are appended to the same violation list.
"""
from __future__ import annotations

from dataclasses import fields

import jsonschema
import yaml

from .basis import Distribution
from .systems import SYSTEMS

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj(
    {
        "system": _obj(
            {
                "name": {"type": "string"},
                "parameters": {"type": "object", "additionalProperties": _num},
                "uncertain": {"type": ["string", "null"]},
                "initial_state": {"type": "array", "items": _num},
            },
            ["name"],
        ),
        "distribution": _obj(
            {"family": {"type": "string"}, "params": {"type": "array", "items": _num}},
            ["family", "params"],
        ),
        "discretization": _obj(
            {
                "H": _nonneg_int,
                "N": _nonneg_int,
                "N_t": {"type": ["integer", "null"]},
                "N_G": {"type": ["integer", "null"], "minimum": 1},
            },
            ["H", "N"],
        ),
        "solver": _obj(
            {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": _pos_int,
                "anchor_state": _nonneg_int,
                "zero_guess": {"type": "boolean"},
                "integration_periods": _pos_int,
            }
        ),
        "deflation": _obj(
            {
                "enabled": {"type": "boolean"},
                "power": _num,
                "shift": _num,
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "max_solutions": _pos_int,
                "phase_shifts": _nonneg_int,
            }
        ),
        "analysis": _obj(
            {
                "branch": {"oneOf": [{"enum": ["all", "largest"]}, _nonneg_int]},
                "moments": _obj({"n_time": _pos_int}),
                "summary": _obj({"n_samples": _pos_int, "n_time": _pos_int}),
                "marginal": _obj(
                    {"time": _num, "n_samples": _pos_int, "bins": {"type": ["string", "integer"]},
                     "state": _nonneg_int},
                    ["time"],
                ),
                "coefficient_grid": _obj({}),
                "convergence_map": _obj(
                    {
                        "H_list": {"type": "array", "items": _nonneg_int, "minItems": 1},
                        "N_list": {"type": "array", "items": _nonneg_int, "minItems": 1},
                        "reference": {"type": "array", "items": _nonneg_int, "minItems": 2, "maxItems": 2},
                        "n_samples": _pos_int,
                    },
                    ["H_list", "N_list", "reference"],
                ),
                "mc_oracle": _obj({"n_samples": _pos_int, "n_time": _pos_int}, ["n_samples"]),
                "phase_portrait": _obj({"n_samples": _pos_int, "n_time": _pos_int}),
                "continuation": _obj(
                    {
                        "omega_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "parameter_values": {"type": "array", "items": _num},
                        "ds": {"type": "number", "exclusiveMinimum": 0},
                        "ds_min": {"type": "number", "exclusiveMinimum": 0},
                        "ds_max": {"type": "number", "exclusiveMinimum": 0},
                        "max_points": _pos_int,
                    },
                    ["omega_range"],
                ),
            }
        ),
        "seed": {"type": "integer"},
        "output": {"type": "string"},
    },
    ["system", "discretization"],
)

FGPC_ANALYSES = ("moments", "summary", "marginal", "coefficient_grid", "convergence_map",
                 "mc_oracle", "phase_portrait")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))


def load(path):
    with open(path) as fh:
        return yaml.safe_load(fh)


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def violations(cfg):
    """All schema and consistency violations of `cfg` as human-readable strings."""
    if not isinstance(cfg, dict):
        return ["<root>: configuration must be a mapping"]
    out = [f"{_path(e)}: {e.message}"
           for e in sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))]
    if out:
        return out
    system = cfg["system"]
    if system["name"] not in SYSTEMS:
        out.append(f"system/name: unknown system {system['name']!r}; registered: {', '.join(SYSTEMS)}")
    else:
        factory, pcls = SYSTEMS[system["name"]]
        names = {f.name for f in fields(pcls)}
        for k in system.get("parameters", {}):
            if k not in names:
                out.append(f"system/parameters/{k}: unknown parameter; expected one of {sorted(names)}")
        try:
            from .systems import make_system

            make_system(system["name"], system.get("parameters"), system.get("uncertain"))
        except (ValueError, TypeError) as exc:
            out.append(f"system: {exc}")
    disc = cfg["discretization"]
    if disc.get("N_t") is not None and disc["N_t"] <= 2 * disc["H"]:
        out.append(
            f"discretization/N_t: {disc['N_t']} violates the anti-aliasing rule N_t > 2H = {2 * disc['H']}"
        )
    if "distribution" in cfg:
        d = cfg["distribution"]
        try:
            Distribution(d["family"], tuple(d["params"]))
        except ValueError as exc:
            out.append(f"distribution: {exc}")
    defl = cfg.get("deflation", {})
    for key in ("power", "shift"):
        if key in defl and not defl[key] > 0:
            sym = "p_D" if key == "power" else "alpha_D"
            out.append(f"deflation/{key}: {defl[key]} violates the DeflationConfig invariant {sym} > 0")
    analysis = cfg.get("analysis", {})
    wants_fgpc = [a for a in FGPC_ANALYSES if a in analysis]
    if wants_fgpc and "distribution" not in cfg:
        out.append(f"distribution: required by analysis {', '.join(wants_fgpc)}")
    if "continuation" in analysis and system.get("name") == "vanderpol":
        out.append("analysis/continuation: needs a forced system")
    if "moments" in analysis and system.get("name") == "vanderpol":
        out.append("analysis/moments: closed-form moments are invalid for self-excited systems; use summary")
    return out


def validate(cfg):
    v = violations(cfg)
    if v:
        raise ConfigError(v)
    return cfg
