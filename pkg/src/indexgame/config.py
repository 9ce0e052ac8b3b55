"""Experiment configuration: JSON schema, validation, and per-protocol defaults.

Configs are plain JSON trees.  Loading fills protocol defaults (supply_chain
or agentic), validates every numeric range, and rejects unknown keys; all
errors name the offending field by its dotted path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

_EXPERIMENTS = ("supply_chain", "agentic", "custom")
_METHODS = ("shaped", "price_only", "tatonnement_only", "centralized")
_RULES = ("damped_gradient", "best_response_hysteresis")
_CAPACITY_MODES = ("planner_fraction", "fixed", "none")


class ConfigError(ValueError):
    """Configuration rejected; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _supply_defaults() -> dict:
    return {
        "experiment": "supply_chain",
        "name": "supply_chain",
        "population": {
            "n": 50,
            "tiers": {"supplier": 20, "processor": 15, "retailer": 15},
            "p_bar": [0.5, 1.5],
            "cost_a": [0.1, 0.3],
            "cost_b": [0.05, 0.15],
            "energy_C": [0.01, 0.05],
            "energy_w": [1.2, 1.8],
            "rel_v": [1.0, 1.6],
            "theta_prior": {"dist": "fixed", "value": 1.0},
            "action_lower": 0.0,
        },
        "curve": {"kappa": 2.2, "beta": 1.6},
        "signal": {"gain": 4.0, "coupling_row_sum": 0.3, "congestion_zeta": 0.0},
        "utility": {"lam": 1.0},
        "dynamics": {
            "eta": 0.4, "rho": 0.8, "eta_z": 0.002, "hysteresis_h": 0.0,
            "sigma": 0.0, "drift_coeff": 1.0, "drift_noise_sd": 0.0,
            "max_iters": 500, "epsilon": 1e-3, "rule": "damped_gradient",
            "index_noise_sd": 0.0,
        },
        "capacity": {"mode": "planner_fraction", "fraction": 0.85},
        "runs": 100,
        "base_seed": 0,
        "methods": ["shaped", "price_only", "tatonnement_only", "centralized"],
    }


def _agentic_defaults() -> dict:
    return {
        "experiment": "agentic",
        "name": "agentic",
        "population": {
            "n": 60,
            "tiers": {},
            "p_bar": [1.0, 1.0],
            "cost_a": [0.2, 0.2],
            "cost_b": [0.1, 0.1],
            "energy_C": [0.01, 0.05],
            "energy_w": [1.2, 1.8],
            "rel_v": [1.0, 1.6],
            "theta_prior": {"dist": "lognormal", "mu": 0.0, "sigma": 0.6},
            "action_lower": 0.0,
        },
        "curve": {"kappa": 2.2, "beta": 1.6},
        "signal": {"gain": 10.0, "coupling_row_sum": 0.0, "congestion_zeta": 0.5},
        "utility": {"lam": 1.0},
        "dynamics": {
            "eta": 0.1, "rho": 0.5, "eta_z": 0.02, "hysteresis_h": 0.0,
            "sigma": 0.0, "drift_coeff": 1.0, "drift_noise_sd": 0.0,
            "max_iters": 500, "epsilon": 1e-3, "rule": "damped_gradient",
            "index_noise_sd": 0.0,
        },
        "capacity": {"mode": "fixed", "value": 20.0},
        "runs": 100,
        "base_seed": 0,
        "methods": ["shaped", "price_only", "centralized"],
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration (see README for the schema)."""

    experiment: str
    name: str
    population: dict
    curve: dict
    signal: dict
    utility: dict
    dynamics: dict
    capacity: dict
    runs: int
    base_seed: int
    methods: tuple
    raw: dict = field(repr=False, default_factory=dict)

    def with_overrides(self, **top_level) -> "ExperimentConfig":
        """Re-validate with top-level fields (runs, base_seed, ...) replaced."""
        data = json.loads(json.dumps(self.raw))
        data.update(top_level)
        return parse_config(data)

    def with_param(self, path: str, value) -> "ExperimentConfig":
        """Re-validate with one dotted-path field (e.g. dynamics.eta_z) replaced."""
        data = json.loads(json.dumps(self.raw))
        node = data
        parts = path.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(path, "no such configuration section")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(path, "no such configuration field")
        node[parts[-1]] = value
        return parse_config(data)


def _merge(defaults: dict, data: dict, prefix: str = "") -> dict:
    out = {}
    for key, dv in defaults.items():
        path = f"{prefix}{key}"
        if key in data:
            sv = data[key]
            if isinstance(dv, dict):
                if not isinstance(sv, dict):
                    raise ConfigError(path, f"expected an object, got {type(sv).__name__}")
                out[key] = _merge(dv, sv, prefix=path + ".")
            else:
                out[key] = sv
        else:
            out[key] = dv
    for key in data:
        if key not in defaults:
            raise ConfigError(f"{prefix}{key}", "unknown configuration key")
    return out


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(path, msg)


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _pos_int(value, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    _require(value >= minimum, path, f"must be >= {minimum}, got {value}")
    return value


def _range_pair(value, path: str, lo_ok=0.0) -> list:
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(path, "expected [low, high]")
    lo, hi = _num(value[0], path + "[0]"), _num(value[1], path + "[1]")
    _require(lo >= lo_ok, path, f"low end must be >= {lo_ok}")
    _require(hi >= lo, path, "high end must be >= low end")
    return [lo, hi]


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config tree, filling protocol defaults; raises ConfigError."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    experiment = data.get("experiment", "supply_chain")
    _require(experiment in _EXPERIMENTS, "experiment",
             f"must be one of {_EXPERIMENTS}, got {experiment!r}")
    defaults = _agentic_defaults() if experiment == "agentic" else _supply_defaults()
    defaults["experiment"] = experiment
    merged = _merge(defaults, data)

    pop = merged["population"]
    n = _pos_int(pop["n"], "population.n", minimum=1)
    tiers = pop["tiers"]
    if tiers:
        for t, cnt in tiers.items():
            _require(t in ("supplier", "processor", "retailer", "bot"),
                     f"population.tiers.{t}", "unknown tier")
            _pos_int(cnt, f"population.tiers.{t}", minimum=0)
        _require(sum(tiers.values()) == n, "population.tiers",
                 f"tier counts must sum to population.n = {n}")
    _range_pair(pop["p_bar"], "population.p_bar")
    _require(_num(pop["p_bar"][0], "population.p_bar[0]") > 0, "population.p_bar",
             "upper-bound draws must be positive")
    lower = _num(pop["action_lower"], "population.action_lower")
    _require(0 <= lower < pop["p_bar"][0], "population.action_lower",
             "must satisfy 0 <= lower < smallest upper bound")
    for key, lo_ok in (("cost_a", 0.0), ("cost_b", 0.0), ("energy_C", 1e-12),
                       ("rel_v", 1e-12)):
        _range_pair(pop[key], f"population.{key}", lo_ok=lo_ok)
    _range_pair(pop["energy_w"], "population.energy_w", lo_ok=1.0 + 1e-9)
    prior = pop["theta_prior"]
    dist = prior.get("dist")
    if dist == "fixed":
        _require(_num(prior.get("value", 1.0), "population.theta_prior.value") > 0,
                 "population.theta_prior.value", "must be positive")
    elif dist == "lognormal":
        _num(prior.get("mu", 0.0), "population.theta_prior.mu")
        _require(_num(prior.get("sigma", 0.6), "population.theta_prior.sigma") >= 0,
                 "population.theta_prior.sigma", "must be >= 0")
    else:
        raise ConfigError("population.theta_prior.dist",
                          f"must be 'fixed' or 'lognormal', got {dist!r}")

    _require(_num(merged["curve"]["kappa"], "curve.kappa") > 0, "curve.kappa", "must be > 0")
    _require(_num(merged["curve"]["beta"], "curve.beta") > 0, "curve.beta", "must be > 0")

    sig = merged["signal"]
    _require(_num(sig["gain"], "signal.gain") > 0, "signal.gain", "must be > 0")
    _require(0 <= _num(sig["coupling_row_sum"], "signal.coupling_row_sum") < 1,
             "signal.coupling_row_sum", "must lie in [0, 1)")
    _require(_num(sig["congestion_zeta"], "signal.congestion_zeta") >= 0,
             "signal.congestion_zeta", "must be >= 0")

    _require(_num(merged["utility"]["lam"], "utility.lam") >= 0, "utility.lam", "must be >= 0")

    dyn = merged["dynamics"]
    _require(_num(dyn["eta"], "dynamics.eta") > 0, "dynamics.eta", "must be > 0")
    _require(0 < _num(dyn["rho"], "dynamics.rho") <= 1, "dynamics.rho", "must be in (0, 1]")
    _require(_num(dyn["eta_z"], "dynamics.eta_z") >= 0, "dynamics.eta_z", "must be >= 0")
    _require(_num(dyn["hysteresis_h"], "dynamics.hysteresis_h") >= 0,
             "dynamics.hysteresis_h", "must be >= 0")
    _require(_num(dyn["sigma"], "dynamics.sigma") >= 0, "dynamics.sigma", "must be >= 0")
    _require(0 <= _num(dyn["drift_coeff"], "dynamics.drift_coeff") <= 1,
             "dynamics.drift_coeff", "must be in [0, 1]")
    _require(_num(dyn["drift_noise_sd"], "dynamics.drift_noise_sd") >= 0,
             "dynamics.drift_noise_sd", "must be >= 0")
    _pos_int(dyn["max_iters"], "dynamics.max_iters", minimum=0)
    _require(_num(dyn["epsilon"], "dynamics.epsilon") >= 0, "dynamics.epsilon", "must be >= 0")
    _require(dyn["rule"] in _RULES, "dynamics.rule", f"must be one of {_RULES}")
    _require(_num(dyn["index_noise_sd"], "dynamics.index_noise_sd") >= 0,
             "dynamics.index_noise_sd", "must be >= 0")

    cap = merged["capacity"]
    mode = cap.get("mode")
    _require(mode in _CAPACITY_MODES, "capacity.mode", f"must be one of {_CAPACITY_MODES}")
    if mode == "planner_fraction":
        frac = _num(cap.get("fraction", 0.85), "capacity.fraction")
        _require(0 < frac <= 1, "capacity.fraction", "must lie in (0, 1]")
    elif mode == "fixed":
        _require(_num(cap.get("value", 0.0), "capacity.value") > 0,
                 "capacity.value", "must be > 0")

    runs = _pos_int(merged["runs"], "runs", minimum=1)
    base_seed = _pos_int(merged["base_seed"], "base_seed", minimum=0)
    methods = merged["methods"]
    _require(isinstance(methods, list) and methods, "methods", "must be a nonempty list")
    for m in methods:
        _require(m in _METHODS, "methods", f"unknown method {m!r}")
    if experiment == "agentic":
        _require("tatonnement_only" not in methods, "methods",
                 "tatonnement_only is a supply-chain ablation")

    return ExperimentConfig(
        experiment=experiment, name=str(merged["name"]), population=pop,
        curve=merged["curve"], signal=sig, utility=merged["utility"], dynamics=dyn,
        capacity=cap, runs=runs, base_seed=base_seed, methods=tuple(methods),
        raw=merged,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return parse_config(data)
