"""Experiment configuration: YAML with strict key checking."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from typing import Any

import yaml

from .errors import ValidationError

SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "pipeline": "heisenberg",
    "seed": 12345,
    "output_dir": None,
    "measure": {
        "q": "unit",
        "k": "paraboloid",
        "gamma": 1.0,
        "k_exponent": 2.0,
        "truncation_radius": 3.0,
        "allow_truncated": True,
        "moment_order": 1.0,
    },
    "grid": {"n_radial": 48, "n_angular": 48, "n_xy": 14, "n_t": 14},
    "solver": {"beta": 2.0, "damping": 0.5, "tol": 1e-8, "max_iter": 20000, "normalization": "equation"},
    "ensemble": {
        "beta": 2.0,
        "n_particles": 8,
        "chain_length": 200000,
        "burn_in": 5000,
        "proposal_scale": 2.0,
        "thin": 5,
        "n_chains": 4,
        "n_bins": 12,
        "save_chain": False,
        "chain_format": "csv",
        "tightness_radii": [1.5, 2.0, 2.5],
    },
    "compact": {
        "nodes": 8,
        "total_curvature": 50.0,
        "model_seed": 7,
        "gamma": 1.0 / (4.0 * math.pi ** 2),
        "perturbation": 0.2,
        "model_file": None,
        "beta": None,
    },
    "probes": [],
    "verify": {"require_artifacts": False},
    "sweep": {"betas": [1.0, 2.0, 4.0, 6.0]},
}

# keys whose values are free-form (not checked against DEFAULTS recursively)
_OPAQUE = {("measure", "q"), ("measure", "k"), ("probes",), ("sweep", "betas"), ("ensemble", "tightness_radii")}

PROBE_NAMES = {
    "heisenberg": ["fixed_point", "homogeneity", "lp_threshold", "slope", "total_curvature", "normality",
                   "meanfield_concentration", "moment_bracket", "tightness", "assumptions"],
    "compact": ["fixed_point", "compact_lemmas", "variational"],
}


def _merge(default: dict, given: dict, path=()) -> dict:
    out = copy.deepcopy(default)
    for key, val in given.items():
        here = path + (key,)
        if key not in default:
            where = ".".join(here)
            raise ValidationError(f"unknown configuration key '{where}'")
        if isinstance(default[key], dict) and here not in _OPAQUE:
            if not isinstance(val, dict):
                raise ValidationError(f"'{'.'.join(here)}' must be a mapping")
            out[key] = _merge(default[key], val, here)
        else:
            out[key] = val
    return out


def _num(cfg, path, lo=None, hi=None, integer=False, lo_open=False, allow_none=False):
    v = cfg
    for p in path:
        v = v[p]
    name = ".".join(path)
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"'{name}' must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ValidationError(f"'{name}' must be an integer")
    if not math.isfinite(v):
        raise ValidationError(f"'{name}' must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ValidationError(f"'{name}' = {v} below allowed range")
    if hi is not None and v >= hi:
        raise ValidationError(f"'{name}' = {v} must be < {hi}")


def normalize_probes(probes) -> list:
    out = []
    if not isinstance(probes, list):
        raise ValidationError("'probes' must be a list")
    for p in probes:
        if isinstance(p, str):
            out.append({"name": p})
        elif isinstance(p, dict) and "name" in p:
            out.append(dict(p))
        else:
            raise ValidationError(f"bad probe entry {p!r}")
    return out


def validate(cfg: dict) -> dict:
    if cfg["pipeline"] not in ("heisenberg", "compact"):
        raise ValidationError("pipeline must be 'heisenberg' or 'compact'")
    _num(cfg, ("seed",), 0, integer=True)
    m = cfg["measure"]
    _num(cfg, ("measure", "gamma"), 0, lo_open=True)
    _num(cfg, ("measure", "k_exponent"))
    _num(cfg, ("measure", "truncation_radius"), 0, lo_open=True)
    _num(cfg, ("measure", "moment_order"), 0)
    if not isinstance(m["allow_truncated"], bool):
        raise ValidationError("'measure.allow_truncated' must be boolean")
    for k in ("n_radial", "n_angular", "n_xy", "n_t"):
        _num(cfg, ("grid", k), 1, integer=True)
    s = cfg["solver"]
    g = m["gamma"] if cfg["pipeline"] == "heisenberg" else cfg["compact"]["gamma"]
    _num(cfg, ("solver", "beta"), 0)
    if not s["beta"] * g < 8:
        raise ValidationError(f"solver.beta*gamma = {s['beta'] * g} must be < 8")
    _num(cfg, ("solver", "damping"), 0, lo_open=True)
    if s["damping"] > 1:
        raise ValidationError("'solver.damping' must lie in (0, 1]")
    _num(cfg, ("solver", "tol"), 0, lo_open=True)
    _num(cfg, ("solver", "max_iter"), 1, integer=True)
    if s["normalization"] not in ("equation", "lambda"):
        raise ValidationError("'solver.normalization' must be 'equation' or 'lambda'")
    e = cfg["ensemble"]
    _num(cfg, ("ensemble", "beta"), 0, 8)
    if not e["beta"] * m["gamma"] < 8:
        raise ValidationError("ensemble.beta*gamma must be < 8")
    _num(cfg, ("ensemble", "n_particles"), 2, integer=True)
    _num(cfg, ("ensemble", "chain_length"), 1, integer=True)
    _num(cfg, ("ensemble", "burn_in"), 0, integer=True)
    if e["burn_in"] >= e["chain_length"]:
        raise ValidationError("ensemble.burn_in must be < ensemble.chain_length")
    _num(cfg, ("ensemble", "proposal_scale"), 0, lo_open=True)
    _num(cfg, ("ensemble", "thin"), 1, integer=True)
    _num(cfg, ("ensemble", "n_chains"), 1, integer=True)
    _num(cfg, ("ensemble", "n_bins"), 1, integer=True)
    if e["chain_format"] not in ("csv", "bin"):
        raise ValidationError("'ensemble.chain_format' must be 'csv' or 'bin'")
    if not isinstance(e["save_chain"], bool):
        raise ValidationError("'ensemble.save_chain' must be boolean")
    c = cfg["compact"]
    _num(cfg, ("compact", "nodes"), 2, integer=True)
    _num(cfg, ("compact", "total_curvature"), 0, 16 * math.pi ** 2, lo_open=True)
    _num(cfg, ("compact", "model_seed"), 0, integer=True)
    _num(cfg, ("compact", "gamma"), 0, lo_open=True)
    _num(cfg, ("compact", "perturbation"), 0)
    _num(cfg, ("compact", "beta"), 0, allow_none=True)
    cfg["probes"] = normalize_probes(cfg["probes"])
    known = PROBE_NAMES[cfg["pipeline"]]
    for p in cfg["probes"]:
        if p["name"] not in known:
            raise ValidationError(f"unknown probe '{p['name']}' for pipeline {cfg['pipeline']}; known: {known}")
    betas = cfg["sweep"]["betas"]
    if not isinstance(betas, list) or not betas:
        raise ValidationError("'sweep.betas' must be a non-empty list")
    validate_betas(betas, g)
    if not isinstance(cfg["verify"]["require_artifacts"], bool):
        raise ValidationError("'verify.require_artifacts' must be boolean")
    return cfg


def validate_betas(betas, gamma: float = 1.0):
    for b in betas:
        if isinstance(b, bool) or not isinstance(b, (int, float)) or not (0 < b and b * gamma < 8):
            raise ValidationError(f"sweep beta {b!r} outside (0, 8/gamma)")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValidationError("sweep betas must be strictly increasing")


def load_config(path=None, overrides: dict | None = None) -> dict:
    given: Any = {}
    if path is not None:
        try:
            with open(path) as fh:
                given = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"cannot parse {path}: {exc}") from exc
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(given, dict):
        raise ValidationError("configuration must be a mapping")
    cfg = _merge(DEFAULTS, given)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
