import json
import re

import numpy as np
import pytest

from indexgame import parse_config
from indexgame.cli import main
from indexgame.experiment import RunOutput, build_run_model, method_kind, run_experiment, run_one


def tiny_supply(runs=2, **extra):
    data = {
        "experiment": "supply_chain",
        "name": "tiny",
        "population": {"n": 6, "tiers": {"supplier": 2, "processor": 2, "retailer": 2}},
        "dynamics": {"max_iters": 40},
        "runs": runs,
        "base_seed": 3,
    }
    data.update(extra)
    return parse_config(data)


def test_model_draws_are_deterministic_and_shared():
    cfg = tiny_supply()
    a = build_run_model(cfg, 0)
    b = build_run_model(cfg, 0)
    c = build_run_model(cfg, 1)
    assert np.array_equal(a.upper, b.upper)
    assert np.array_equal(a.cost_a, b.cost_a)
    assert np.array_equal(a.signal.coupling, b.signal.coupling)
    assert not np.array_equal(a.upper, c.upper)
    tiers = [ag.tier for ag in a.agents]
    assert tiers == ["supplier"] * 2 + ["processor"] * 2 + ["retailer"] * 2


def test_method_kinds():
    cfg = tiny_supply()
    assert method_kind("shaped", cfg).family == "dsh"
    assert method_kind("shaped", cfg).index_priced is True
    assert method_kind("price_only", cfg).family == "price_only"
    assert method_kind("tatonnement_only", cfg).linearized is True
    agentic = parse_config({"experiment": "agentic"})
    assert method_kind("shaped", agentic).family == "agentic_bid"
    with pytest.raises(ValueError):
        method_kind("mystery", cfg)


def test_run_experiment_outputs_and_determinism(tmp_path):
    cfg = tiny_supply()
    code = run_experiment(cfg, tmp_path / "a")
    assert code == 0
    code = run_experiment(cfg, tmp_path / "b")
    assert code == 0
    kpi_a = (tmp_path / "a" / "kpi.csv").read_bytes()
    kpi_b = (tmp_path / "b" / "kpi.csv").read_bytes()
    assert kpi_a == kpi_b
    t_a = (tmp_path / "a" / "trace_shaped_0.csv").read_bytes()
    t_b = (tmp_path / "b" / "trace_shaped_0.csv").read_bytes()
    assert t_a == t_b
    for method in cfg.methods:
        for run in range(cfg.runs):
            assert (tmp_path / "a" / f"trace_{method}_{run}.csv").exists()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["completed"] == 2
    assert set(summary["methods"]) == set(cfg.methods)
    assert any(k.startswith("shaped_vs_price_only") for k in summary["significance"])


def test_trace_schema_and_float_format(tmp_path):
    cfg = tiny_supply(runs=1)
    run_experiment(cfg, tmp_path)
    lines = (tmp_path / "trace_shaped_0.csv").read_text().strip().splitlines()
    assert lines[0] == "iter,W,gap,load,violation,z"
    assert len(lines) == 1 + 40
    cells = lines[1].split(",")
    assert cells[0] == "1"
    for cell in cells[1:]:
        # 9 significant digits max, plain or scientific
        assert re.fullmatch(r"-?(\d+\.?\d*|\d*\.\d+)(e[+-]\d+)?", cell)
        mantissa = re.sub(r"e[+-]\d+$", "", cell).replace("-", "").replace(".", "").lstrip("0")
        assert len(mantissa) <= 9
    header = (tmp_path / "kpi.csv").read_text().splitlines()[0]
    assert header == "method,run,terminal_gap,violation_rate,iterations_to_eps,alpha_hat,w_star,capacity"


def test_centralized_only_gap_is_tiny(tmp_path):
    cfg = tiny_supply(runs=2, methods=["centralized"])
    run_experiment(cfg, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert abs(summary["methods"]["centralized"]["terminal_gap"]["median"]) < 1e-3


def test_methods_consume_shared_noise_stream():
    cfg = tiny_supply(runs=1, dynamics={"max_iters": 40, "sigma": 0.05})
    out = run_one(cfg, 0)
    seeds = {tuple(out.results[m].seed) for m in ("shaped", "price_only")}
    assert len(seeds) == 1


def test_worker_pool_matches_serial(tmp_path):
    cfg = tiny_supply()
    run_experiment(cfg, tmp_path / "serial", threads=1)
    run_experiment(cfg, tmp_path / "pool", threads=2)
    assert (tmp_path / "serial" / "kpi.csv").read_bytes() == \
        (tmp_path / "pool" / "kpi.csv").read_bytes()


def test_abort_fraction_drives_exit_code(tmp_path, monkeypatch):
    cfg = tiny_supply(runs=4)
    real = run_one

    def flaky(config, run_index):
        if run_index % 2 == 0:
            return RunOutput(run_index, None, 0.0, 0.0, {}, {}, error="synthetic abort")
        return real(config, run_index)

    monkeypatch.setattr("indexgame.experiment.run_one", flaky)
    code = run_experiment(cfg, tmp_path)
    assert code == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["aborted"]) == 2
    assert summary["aborted"][0]["reason"] == "synthetic abort"


# ------------------------------------------------------------------------ CLI

def write_config(tmp_path, runs=1):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "experiment": "supply_chain",
        "name": "tiny",
        "population": {"n": 6, "tiers": {"supplier": 2, "processor": 2, "retailer": 2}},
        "dynamics": {"max_iters": 30},
        "runs": runs,
        "base_seed": 3,
    }))
    return path


def test_cli_run_and_analyze(tmp_path, capsys):
    path = write_config(tmp_path, runs=2)
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 0
    assert (out / "kpi.csv").exists()
    assert main(["analyze", str(out)]) == 0
    assert (out / "analysis.json").exists()
    text = capsys.readouterr().out
    assert "shaped" in text and "price_only" in text


def test_cli_seed_and_runs_overrides(tmp_path):
    path = write_config(tmp_path, runs=3)
    out = tmp_path / "o1"
    assert main(["run", str(path), "--out", str(out), "--runs", "1", "--seed", "11"]) == 0
    kpi = (out / "kpi.csv").read_text().strip().splitlines()
    runs = {line.split(",")[1] for line in kpi[1:]}
    assert runs == {"0"}


def test_cli_sweep(tmp_path):
    path = write_config(tmp_path, runs=1)
    out = tmp_path / "sweep"
    assert main(["sweep", str(path), "--out", str(out),
                 "--param", "dynamics.eta_z", "--values", "0.01,0.02"]) == 0
    assert (out / "sweep.json").exists()
    assert (out / "dynamics_eta_z=0.01" / "kpi.csv").exists()
    assert (out / "dynamics_eta_z=0.02" / "kpi.csv").exists()


def test_cli_bench(tmp_path):
    path = write_config(tmp_path, runs=1)
    out = tmp_path / "bench"
    assert main(["bench", str(path), "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().strip().splitlines()
    assert lines[0].startswith("run,capacity,w_star_unconstrained")
    assert len(lines) == 2


def test_cli_invalid_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "supply_chain", "dynamics": {"eta": -1}}))
    assert main(["run", str(path)]) == 2
    missing = tmp_path / "missing.json"
    assert main(["run", str(missing)]) == 2


def test_cli_analyze_missing_dir(tmp_path):
    assert main(["analyze", str(tmp_path / "ghost")]) == 2
