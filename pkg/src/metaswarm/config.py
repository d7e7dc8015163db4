"""Strict JSON run configuration: schema, parsing, and consistency checks.

Unknown keys are rejected everywhere; a silent typo in a tolerance name
must not be able to invalidate a validation run.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigFileError, ConfigurationError, SchemaViolationError
from .kernels import KernelSpec
from .validate import DEFAULT_CONFIG

MODES = ("particles", "pde", "asymptotic", "experiment")

_GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_cells": {"type": "integer", "minimum": 16, "default": 600},
        "x_left": {"type": "number", "default": 0.0},
        "x_right": {"type": "number", "default": 3.0},
    },
}

_PDE_INITIAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["two_spike", "bump"], "default": "two_spike"},
        "M1": {"type": "number", "exclusiveMinimum": 0, "default": 0.35},
        "M2": {"type": "number", "exclusiveMinimum": 0, "default": 0.65},
        "x1": {"type": "number", "default": 1.0},
        "center": {"type": "number", "default": 0.0},
        "width": {"type": "number", "exclusiveMinimum": 0, "default": 0.1},
        "mass": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
    },
}

_PARTICLES_INITIAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["two_cluster", "uniform"], "default": "two_cluster"},
        "n_left": {"type": "integer", "minimum": 1, "default": 80},
        "n_right": {"type": "integer", "minimum": 1, "default": 120},
        "centers": {"type": "array", "items": {"type": "number"},
                    "minItems": 2, "maxItems": 2, "default": [-0.5, 0.5]},
        "spread": {"type": "number", "exclusiveMinimum": 0, "default": 0.05},
        "n": {"type": "integer", "minimum": 2, "default": 200},
        "low": {"type": "number", "default": -1.0},
        "high": {"type": "number", "default": 1.0},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "metaswarm run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["kernel", "mode"],
    "properties": {
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["linear_attraction", "cubic_double_well",
                                  "odd_polynomial"],
                         "default": "cubic_double_well"},
                "coefficients": {"type": "array",
                                 "items": {"type": "number"}, "default": []},
            },
        },
        "mode": {"enum": list(MODES), "default": "pde"},
        "seed": {"type": "integer", "minimum": 0, "default": 0},
        "output_dir": {"type": "string", "default": "out"},
        "pde": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps2": {"type": "number", "exclusiveMinimum": 0,
                         "default": 0.001},
                "dt": {"type": "number", "exclusiveMinimum": 0,
                       "default": 0.0005},
                "t_end": {"type": "number", "minimum": 0, "default": 10.0},
                "grid": _GRID_SCHEMA,
                "output_times": {"type": "array", "items": {"type": "number"},
                                 "default": []},
                "initial": _PDE_INITIAL_SCHEMA,
            },
        },
        "particles": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma": {"type": "number", "minimum": 0, "default": 0.075},
                "dt": {"type": "number", "exclusiveMinimum": 0,
                       "default": 0.001},
                "steps": {"type": "integer", "minimum": 1, "default": 10000},
                "record_stride": {"type": "integer", "minimum": 1,
                                  "default": 100},
                "output": {"enum": ["masses", "full"], "default": "masses"},
                "split_point": {"type": "number", "default": 0.0},
                "initial": _PARTICLES_INITIAL_SCHEMA,
            },
        },
        "asymptotic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps2": {"type": "number", "exclusiveMinimum": 0,
                         "default": 0.001},
                "M1_0": {"type": "number", "exclusiveMinimum": 0,
                         "default": 0.4},
                "total_mass": {"type": "number", "exclusiveMinimum": 0,
                               "default": 1.0},
                "t_end": {"type": "number", "exclusiveMinimum": 0,
                          "default": 1e6},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["gaussian", "quasisteady", "metastability",
                                  "particle_equilibration"]},
                "config": {"type": "object", "default": {}},
            },
        },
    },
}

_validator = Draft202012Validator(SCHEMA)


@dataclass
class RunConfig:
    kernel: KernelSpec
    mode: str
    seed: int
    output_dir: str
    section: dict


def _fill_defaults(schema: dict, value, root: bool = True):
    """Recursively apply schema defaults to a validated document.

    Absent nested objects are synthesized from their field defaults,
    except at the root, where a missing mode section must stay missing
    (exactly one mode section is allowed).
    """
    if schema.get("type") == "object" and isinstance(value, dict):
        out = dict(value)
        for key, sub in schema.get("properties", {}).items():
            if key in out:
                out[key] = _fill_defaults(sub, out[key], root=False)
            elif "default" in sub:
                out[key] = _fill_defaults(sub, copy.deepcopy(sub["default"]),
                                          root=False)
            elif (sub.get("type") == "object" and "required" not in sub
                    and not root):
                out[key] = _fill_defaults(sub, {}, root=False)
        return out
    return value


def default_config(mode: str = "pde") -> dict:
    """Config assembled purely from schema defaults for the given mode."""
    doc = {"kernel": {"kind": SCHEMA["properties"]["kernel"]["properties"]
                      ["kind"]["default"]},
           "mode": mode}
    if mode == "experiment":
        doc["experiment"] = {"name": "gaussian"}
    else:
        doc[mode] = {}
    return _fill_defaults(SCHEMA, doc)


def _check_experiment_override(name: str, override: dict) -> None:
    defaults = DEFAULT_CONFIG[name]

    def walk(prefix, d, ref):
        for key, val in d.items():
            if key not in ref:
                raise SchemaViolationError(
                    f"unknown experiment config key {prefix + key!r} "
                    f"for experiment {name!r}")
            if isinstance(val, dict) and isinstance(ref[key], dict):
                walk(prefix + key + ".", val, ref[key])

    walk("", override, defaults)


def _consistency_checks(doc: dict) -> None:
    if (doc["kernel"]["kind"] == "odd_polynomial"
            and not doc["kernel"]["coefficients"]):
        raise SchemaViolationError(
            "odd_polynomial kernel requires nonempty coefficients")
    mode = doc["mode"]
    present = [m for m in MODES if m in doc]
    if len(present) > 1:
        raise SchemaViolationError(
            f"multiple mode sections present ({', '.join(present)}); "
            "exactly one is allowed")
    if mode not in doc:
        raise SchemaViolationError(
            f"mode is {mode!r} but the {mode!r} section is missing")

    if mode == "pde":
        sec = doc["pde"]
        if sec["initial"]["kind"] == "two_spike":
            eps = float(np.sqrt(sec["eps2"]))
            g = sec["grid"]
            dx = (g["x_right"] - g["x_left"]) / g["n_cells"]
            if dx > eps / 6.0:
                warnings.warn(
                    f"grid under-resolves the spikes: dx={dx:.4g} > "
                    f"eps/6={eps / 6.0:.4g}", RuntimeWarning)
    if mode == "experiment":
        sec = doc["experiment"]
        _check_experiment_override(sec["name"], sec["config"])
        if sec["name"] == "metastability":
            merged = {**DEFAULT_CONFIG["metastability"], **sec["config"]}
            if merged["cells_per_eps"] < 6:
                raise ConfigurationError(
                    "inconsistent parameters: metastability requires "
                    f"dx <= eps/6 (cells_per_eps >= 6, got "
                    f"{merged['cells_per_eps']})")
    if mode == "asymptotic":
        sec = doc["asymptotic"]
        if not 0.0 < sec["M1_0"] < sec["total_mass"]:
            raise ConfigurationError(
                "inconsistent parameters: M1_0 must lie in (0, total_mass)")


def parse_config(path) -> RunConfig:
    """Load, validate, default-fill, and consistency-check a config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"config is not valid JSON: {exc}") from exc

    errors = sorted(_validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.path) or "<root>"
        raise SchemaViolationError(f"schema violation at {where}: "
                                   f"{first.message}")
    doc = _fill_defaults(SCHEMA, doc)
    _consistency_checks(doc)

    kernel = KernelSpec(kind=doc["kernel"]["kind"],
                        coefficients=tuple(doc["kernel"]["coefficients"]))
    return RunConfig(
        kernel=kernel,
        mode=doc["mode"],
        seed=doc["seed"],
        output_dir=doc["output_dir"],
        section=doc.get(doc["mode"], {}),
    )
