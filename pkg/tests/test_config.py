import json

import pytest

from indexgame import ConfigError, load_config, parse_config


def test_supply_defaults():
    cfg = parse_config({"experiment": "supply_chain"})
    assert cfg.population["n"] == 50
    assert cfg.population["tiers"] == {"supplier": 20, "processor": 15, "retailer": 15}
    assert (cfg.curve["kappa"], cfg.curve["beta"]) == (2.2, 1.6)
    assert cfg.dynamics["max_iters"] == 500
    assert cfg.dynamics["epsilon"] == 1e-3
    assert cfg.runs == 100
    assert cfg.methods == ("shaped", "price_only", "tatonnement_only", "centralized")
    assert cfg.capacity == {"mode": "planner_fraction", "fraction": 0.85}


def test_agentic_defaults():
    cfg = parse_config({"experiment": "agentic"})
    assert cfg.population["n"] == 60
    assert cfg.population["theta_prior"] == {"dist": "lognormal", "mu": 0.0, "sigma": 0.6}
    assert cfg.population["action_lower"] == 0.0
    assert cfg.population["p_bar"] == [1.0, 1.0]
    assert cfg.capacity == {"mode": "fixed", "value": 20.0}
    assert (cfg.curve["kappa"], cfg.curve["beta"]) == (2.2, 1.6)
    assert "tatonnement_only" not in cfg.methods


def test_negative_eta_names_field():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "supply_chain", "dynamics": {"eta": -0.1}})
    assert "dynamics.eta" in str(err.value)


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "supply_chain", "dynamics": {"step": 0.1}})
    assert "dynamics.step" in str(err.value)
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "supply_chain", "turbo": True})
    assert "turbo" in str(err.value)


def test_tier_counts_must_sum_to_n():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "supply_chain",
                      "population": {"tiers": {"supplier": 3, "processor": 3, "retailer": 3}}})
    assert "population.tiers" in str(err.value)


def test_agentic_rejects_tatonnement():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "agentic", "methods": ["shaped", "tatonnement_only"]})


def test_unknown_method_and_experiment():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "supply_chain", "methods": ["alchemy"]})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "barter"})


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_load_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"experiment": "agentic", "runs": 7}))
    cfg = load_config(path)
    assert cfg.runs == 7
    assert cfg.population["n"] == 60


def test_with_overrides_and_with_param():
    cfg = parse_config({"experiment": "supply_chain"})
    cfg2 = cfg.with_overrides(runs=5, base_seed=9)
    assert (cfg2.runs, cfg2.base_seed) == (5, 9)
    cfg3 = cfg.with_param("dynamics.eta_z", 0.07)
    assert cfg3.dynamics["eta_z"] == 0.07
    with pytest.raises(ConfigError):
        cfg.with_param("dynamics.nope", 1.0)


def test_capacity_validation():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "supply_chain", "capacity": {"mode": "planner_fraction", "fraction": 1.5}})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "agentic", "capacity": {"mode": "fixed", "value": -3}})
    cfg = parse_config({"experiment": "supply_chain", "capacity": {"mode": "none"}})
    assert cfg.capacity["mode"] == "none"
