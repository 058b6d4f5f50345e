"""Run configuration: JSON file, schema validation, dataclass view."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .errors import ConfigError
from .grids import Grid2D
from .quartic import QuarticDifferential

_SCHEMA_PATH = os.path.join(os.path.dirname(__file__), "schema", "runconfig.schema.json")

DEFAULTS = {
    "solver": {"tol": 1e-10, "max_iter": 30},
    "thresholds": {"k": -1.0 / 30.0, "t_levels": [1.0, 2.0, 3.0, 4.0, 5.0]},
    "slices": {"count": 24, "directions": 64, "step": 0.01, "max_cloud": 10_000},
    "decay": {"window_lo": 2.0},
    "output": "maxsurf_out",
    "seed": 0,
    "strict": False,
}


@dataclass
class RunConfig:
    quartic: QuarticDifferential
    grid: Grid2D
    boundary: dict
    solver: dict
    thresholds: dict
    slices: dict
    decay: dict
    output: str
    seed: int
    strict: bool
    raw: dict = field(repr=False, default_factory=dict)


def _schema():
    with open(_SCHEMA_PATH) as fh:
        return json.load(fh)


def load_config(path, out_override=None, seed_override=None, strict_override=None):
    """Parse, schema-validate, and consistency-check a config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("(file)", f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError("(file)", f"invalid JSON: {e}")
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)),
                        out_override=out_override, seed_override=seed_override,
                        strict_override=strict_override)


def parse_config(raw, base_dir=".", out_override=None, seed_override=None, strict_override=None):
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "(root)"
        raise ConfigError(where, e.message)

    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in DEFAULTS.items()}
    for k, v in raw.items():
        if isinstance(v, dict) and k in merged:
            merged[k].update(v)
        else:
            merged[k] = v

    coeffs = np.array([complex(re, im) for re, im in raw["quartic"]])
    try:
        q = QuarticDifferential(coeffs)
    except ValueError as e:
        raise ConfigError("quartic", str(e))

    g = dict(raw["grid"])
    g.setdefault("bc", "dirichlet")
    try:
        grid = Grid2D(g["x0"], g["x1"], g["y0"], g["y1"], g["nx"], g["ny"], g["bc"])
    except ValueError as e:
        raise ConfigError("grid", str(e))

    boundary = dict(raw["boundary"])
    if boundary["kind"] == "perturbed" and "amplitude" not in boundary:
        raise ConfigError("boundary.amplitude", "perturbed boundary needs an amplitude")
    if boundary["kind"] == "explicit":
        if "path" not in boundary:
            raise ConfigError("boundary.path", "explicit boundary needs a path")
        boundary["path"] = os.path.join(base_dir, boundary["path"])
        if not os.path.exists(boundary["path"]):
            raise ConfigError("boundary.path", f"file not found: {boundary['path']}")

    k = merged["thresholds"]["k"]
    if not (-1.0 / 3.0 < k < 0.0):
        raise ConfigError("thresholds.k", f"k = {k} outside (-1/3, 0)")

    return RunConfig(
        quartic=q,
        grid=grid,
        boundary=boundary,
        solver=merged["solver"],
        thresholds=merged["thresholds"],
        slices=merged["slices"],
        decay=merged["decay"],
        output=out_override or merged["output"],
        seed=int(seed_override if seed_override is not None else merged["seed"]),
        strict=bool(strict_override if strict_override is not None else merged["strict"]),
        raw=raw,
    )
