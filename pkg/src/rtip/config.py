"""Experiment configuration: JSON loading, defaults, and validation.

A configuration is a nested dict of blocks. Unknown keys are rejected at
every level; missing keys fall back to defaults (model parameters fall back
to the published table values). Validated configs are plain dicts so the
effective configuration can be emitted as JSON and re-validated.
"""
from __future__ import annotations

import copy
import hashlib
import json

from .dynamics import (
    AmocParams,
    ExampleParams,
    HosingProfile,
    TanhRampForcing,
)
from .errors import ConfigError
from .integrators import NoiseModel
from .threshold import Window

__all__ = [
    "DEFAULT_CONFIG",
    "load_config",
    "validate_config",
    "config_hash",
    "ExperimentConfig",
]

DEFAULT_CONFIG = {
    "model": "amoc3box",
    "base_seed": 1,
    "output": "out",
    "params": {},
    "forcing": {
        "type": "hosing",
        "H0": 0.0,
        "H_max": 0.38,
        "T_rise": 100.0,
        "T_plat": 300.0,
        "T_fall": 200.0,
        "p_plus": 1.7,
        "theta": 0.08,
    },
    "noise": {
        "sigma": 0.01,
        "A11": 0.1263,
        "A12": -0.0869,
        "A21": 0.0,
        "A22": 0.1008,
    },
    "integrator": {"dt": 0.1, "record_stride": 10, "t_extend": 1500.0},
    "threshold": {
        "target_spacing": 0.01,
        "reinterp_dt": 1.0,
        "snapshot_dt": 5.0,
        "arc_extent": 20.0,
        "t_start": 0.0,
        "window": [-3.0, 1.0, -1.5, 1.5],
        "grid_n": 41,
        "fate_times": [0.0],
    },
    "ensemble": {
        "n_target_per_class": 100,
        "max_draws": 2000,
        "t_init": 0.0,
        "chunk": 64,
        "r_class": 0.05,
        "t_horizon": 2000.0,
    },
    "skill": {
        "fixed_thresholds": {"S_N": 0.034, "S_T": 0.0366, "R_INDICATOR": 0.0},
        "sens_level": 0.95,
        "spec_level": 0.95,
        "return_rate_window": 200.0,
        "roc_times": [100.0, 200.0, 300.0, 400.0],
    },
    "example": {
        "p_plus": 1.7,
        "sigma": 0.1,
        "thetas": [0.015, 0.08, 0.4],
        "n_members": 30,
        "dt": 0.01,
        "x_cap": 5.0,
    },
}

_POSITIVE = {
    ("integrator", "dt"),
    ("threshold", "target_spacing"),
    ("threshold", "reinterp_dt"),
    ("threshold", "snapshot_dt"),
    ("threshold", "arc_extent"),
    ("ensemble", "t_horizon"),
    ("ensemble", "r_class"),
    ("skill", "return_rate_window"),
    ("example", "dt"),
    ("example", "x_cap"),
}
_NONNEGATIVE = {
    ("forcing", "T_rise"),
    ("forcing", "T_plat"),
    ("forcing", "T_fall"),
    ("forcing", "theta"),
    ("noise", "sigma"),
    ("example", "sigma"),
}


def _merge(default, user, path=""):
    if isinstance(default, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"config key {path or '<root>'} must be an object")
        out = {}
        for key, dval in default.items():
            if key in user:
                out[key] = _merge(dval, user[key], f"{path}.{key}" if path else key)
            else:
                out[key] = copy.deepcopy(dval)
        unknown = set(user) - set(default)
        if unknown:
            where = path or "<root>"
            raise ConfigError(
                f"unknown config key {sorted(unknown)[0]!r} in {where}"
            )
        return out
    return copy.deepcopy(user)


def validate_config(raw: dict) -> dict:
    """Fill defaults, reject unknown keys, check ranges; returns the
    effective configuration dict."""
    cfg = _merge(DEFAULT_CONFIG, raw)
    if cfg["model"] not in ("amoc3box", "example1d"):
        raise ConfigError(f"model must be amoc3box or example1d, got {cfg['model']!r}")
    if cfg["forcing"]["type"] not in ("hosing", "tanh_ramp"):
        raise ConfigError(
            f"forcing.type must be hosing or tanh_ramp, got {cfg['forcing']['type']!r}"
        )
    if int(cfg["base_seed"]) < 0:
        raise ConfigError("base_seed must be a nonnegative integer")
    for block, key in _POSITIVE:
        v = cfg[block][key]
        if not v > 0:
            raise ConfigError(f"{block}.{key} must be > 0, got {v}")
    for block, key in _NONNEGATIVE:
        v = cfg[block][key]
        if v < 0:
            raise ConfigError(f"{block}.{key} must be >= 0, got {v}")
    ens = cfg["ensemble"]
    if ens["n_target_per_class"] < 1:
        raise ConfigError("ensemble.n_target_per_class must be >= 1")
    if ens["max_draws"] < 2 * ens["n_target_per_class"]:
        raise ConfigError("ensemble.max_draws must cover two full classes")
    win = cfg["threshold"]["window"]
    if len(win) != 4 or not (win[1] > win[0] and win[3] > win[2]):
        raise ConfigError("threshold.window must be [x_min, x_max, y_min, y_max]")
    if cfg["threshold"]["grid_n"] < 3:
        raise ConfigError("threshold.grid_n must be >= 3")
    # constructing the parameter set validates table keys and ranges
    AmocParams.from_dict(cfg["params"])
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class ExperimentConfig:
    """Typed accessors over a validated configuration dict."""

    def __init__(self, cfg: dict):
        self.cfg = cfg

    @property
    def base_seed(self) -> int:
        return int(self.cfg["base_seed"])

    def amoc_params(self) -> AmocParams:
        return AmocParams.from_dict(self.cfg["params"])

    def example_params(self) -> ExampleParams:
        e = self.cfg["example"]
        return ExampleParams(p_plus=e["p_plus"], sigma=e["sigma"])

    def forcing(self):
        f = self.cfg["forcing"]
        if f["type"] == "hosing":
            return HosingProfile(
                H0=f["H0"],
                H_max=f["H_max"],
                T_rise=f["T_rise"],
                T_plat=f["T_plat"],
                T_fall=f["T_fall"],
            )
        return TanhRampForcing(p_plus=f["p_plus"], theta=f["theta"])

    def noise_model(self) -> NoiseModel:
        n = self.cfg["noise"]
        return NoiseModel(
            sigma=n["sigma"],
            A=[[n["A11"], n["A12"]], [n["A21"], n["A22"]]],
        )

    def window(self) -> Window:
        return Window(*self.cfg["threshold"]["window"])
