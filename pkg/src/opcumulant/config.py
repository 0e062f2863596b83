"""Run configuration: TOML sections validated against a fixed schema.

Sections
--------
[model]   name = "kapitza" | "modulated-kapitza" | "parametric-oscillator",
          plus model parameters (see MODEL_KEYS)
[window]  kind, tau
[engine]  order, omega_cut (optional), coeff_floor, tau (optional, must equal window.tau)
[sweep]   gamma, beta, orders  (threshold)  /  omega1, omega2  (couplings)
[sim]     t_start, t_end, theta0, p0, steps_per_period, seed_radius, seed_vertices
[output]  path, format
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Dict

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


_REQ = object()

NUM = (int, float)

MODEL_KEYS = {
    "kapitza": {"nu": (NUM, 1.0)},
    "modulated-kapitza": {
        "gamma2": (NUM, 0.02), "lam": (NUM, 0.3), "nu": (NUM, 20.0), "beta": (NUM, 0.05),
        "amplitude": (NUM, 0.2), "period": (NUM, 5 / (2 * math.pi)),
    },
    "parametric-oscillator": {"eps": (NUM, 0.1), "omega0": (NUM, 1.0), "Omega": (NUM, 2.0)},
}

SCHEMA = {
    "window": {"kind": (str, _REQ), "tau": (NUM, _REQ)},
    "engine": {"order": (int, _REQ), "omega_cut": (NUM, None), "coeff_floor": (NUM, 1e-12),
               "tau": (NUM, None)},
    "sweep": {"gamma": (list, None), "beta": (list, None), "orders": (list, None),
              "omega1": (list, None), "omega2": (list, None)},
    "sim": {"t_start": (NUM, -2.0), "t_end": (NUM, 40.0), "theta0": (NUM, 0.01), "p0": (NUM, 0.0),
            "steps_per_period": (int, 256), "seed_radius": (NUM, 0.005), "seed_vertices": (int, 64)},
    "output": {"path": (str, "."), "format": (str, "csv")},
}

REQUIRED_SECTIONS = ("model", "window", "engine")


@dataclass
class RunConfig:
    model: Dict[str, Any]
    window: Dict[str, Any]
    engine: Dict[str, Any]
    sweep: Dict[str, Any] = field(default_factory=dict)
    sim: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)
    digest: str = ""

    def as_dict(self):
        return {k: getattr(self, k) for k in ("model", "window", "engine", "sweep", "sim", "output")}


def _check(section: str, raw: dict, spec: dict) -> dict:
    out = {}
    for key in raw:
        if key not in spec:
            raise ConfigError(f"unknown key '{section}.{key}'")
    for key, (typ, default) in spec.items():
        if key not in raw:
            if default is _REQ:
                raise ConfigError(f"missing key '{section}.{key}'")
            out[key] = default
            continue
        val = raw[key]
        if isinstance(val, bool) or not isinstance(val, typ):
            raise ConfigError(f"key '{section}.{key}' has wrong type {type(val).__name__}")
        if typ is list and not all(isinstance(v, NUM) and not isinstance(v, bool) for v in val):
            raise ConfigError(f"key '{section}.{key}' must be a list of numbers")
        out[key] = val
    return out


def validate(raw: dict) -> RunConfig:
    for sec in raw:
        if sec not in SCHEMA and sec != "model":
            raise ConfigError(f"unknown section '[{sec}]'")
    for sec in REQUIRED_SECTIONS:
        if sec not in raw:
            raise ConfigError(f"missing section '[{sec}]'")
    model_raw = dict(raw["model"])
    if "name" not in model_raw:
        raise ConfigError("missing key 'model.name'")
    name = model_raw.pop("name")
    if name not in MODEL_KEYS:
        raise ConfigError(f"key 'model.name' must be one of {sorted(MODEL_KEYS)}")
    model = {"name": name, **_check("model", model_raw, MODEL_KEYS[name])}
    secs = {s: _check(s, raw.get(s, {}), SCHEMA[s]) for s in SCHEMA}
    win = secs["window"]
    if win["kind"] not in ("gaussian", "rectangular", "delta"):
        raise ConfigError("key 'window.kind' must be gaussian, rectangular or delta")
    if win["tau"] < 0 or (win["kind"] != "delta" and win["tau"] == 0):
        raise ConfigError("key 'window.tau' must be positive")
    if secs["engine"]["order"] < 1:
        raise ConfigError("key 'engine.order' must be >= 1")
    if secs["output"]["format"] not in ("csv", "json"):
        raise ConfigError("key 'output.format' must be csv or json")
    cfg = RunConfig(model=model, **secs)
    cfg.digest = config_hash(cfg)
    return cfg


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def loads(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return validate(raw)


def load(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return loads(text)
