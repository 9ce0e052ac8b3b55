"""Experiment orchestration: seeded model draws, per-method runs, CSV/JSON output.

One run = one seeded population draw shared by every method, one capacity,
one high-accuracy benchmark W*, and one trajectory per method consuming an
identical noise stream.  Output layout under the chosen directory:

    trace_<method>_<run>.csv    per-iteration series (iter, W, gap, load, violation, z)
    kpi.csv                     one row per method x run
    summary.json                medians/quartiles, Wilcoxon vs price-only, BH flags
"""

from __future__ import annotations

import concurrent.futures
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import KpiRecord, fdr_bh, kpis, median_iqr, wilcoxon_signed_rank
from .benchmarks import (centralized_capped_proximal, centralized_proximal,
                         centralized_trajectory)
from .config import ExperimentConfig
from .curve import ResponseCurve
from .dynamics import DivergenceError, DynamicsConfig, RunResult, run_trajectory
from .model import (AGENTIC, AGENTIC_BID, DSH, PRICE_ONLY, SUPPLY_CHAIN,
                    AgentSpec, GameModel, SignalMap, UtilityKind)

__all__ = ["build_run_model", "method_kind", "run_one", "run_experiment", "RunOutput"]

_TIER_UPSTREAM = {"processor": "supplier", "retailer": "processor"}


def _draw(rng: np.random.Generator, pair) -> float:
    lo, hi = pair
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _draw_theta(rng: np.random.Generator, prior: dict) -> float:
    if prior["dist"] == "lognormal":
        return float(rng.lognormal(prior.get("mu", 0.0), prior.get("sigma", 0.6)))
    return float(prior.get("value", 1.0))


def _tier_labels(pop: dict) -> list[str]:
    tiers = pop.get("tiers") or {}
    labels: list[str] = []
    for tier, count in tiers.items():
        labels.extend([tier] * count)
    if not labels:
        labels = ["bot"] * pop["n"]
    return labels


def _draw_coupling(rng: np.random.Generator, labels: list[str], row_sum: float) -> Optional[np.ndarray]:
    """Tier-structured interference: peers plus the upstream tier feed each row."""
    n = len(labels)
    if row_sum <= 0 or n < 2:
        return None
    allowed = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            allowed[i, j] = labels[j] == labels[i] or labels[j] == _TIER_UPSTREAM.get(labels[i])
    raw = rng.uniform(0.2, 1.0, (n, n)) * allowed
    sums = raw.sum(axis=1, keepdims=True)
    targets = row_sum * rng.uniform(0.5, 1.0, (n, 1))
    scale = np.where(sums > 0, targets / np.maximum(sums, 1e-300), 0.0)
    return raw * scale


def build_run_model(config: ExperimentConfig, run_index: int) -> GameModel:
    """Deterministic seeded population draw shared by every method of a run."""
    rng = np.random.default_rng([config.base_seed, run_index, 0])
    pop = config.population
    market = AGENTIC if config.experiment == "agentic" else SUPPLY_CHAIN
    labels = _tier_labels(pop)
    lower = pop["action_lower"]
    agents = [
        AgentSpec(
            lower=lower,
            upper=_draw(rng, pop["p_bar"]),
            cost_a=_draw(rng, pop["cost_a"]),
            cost_b=_draw(rng, pop["cost_b"]),
            theta=_draw_theta(rng, pop["theta_prior"]),
            energy_C=_draw(rng, pop["energy_C"]),
            energy_w=_draw(rng, pop["energy_w"]),
            rel_v=_draw(rng, pop["rel_v"]),
            tier=labels[i],
        )
        for i in range(pop["n"])
    ]
    coupling = _draw_coupling(rng, labels, config.signal["coupling_row_sum"])
    signal = SignalMap(gain=config.signal["gain"], coupling=coupling,
                       congestion_zeta=config.signal["congestion_zeta"])
    return GameModel(
        agents=agents,
        curve=ResponseCurve(config.curve["kappa"], config.curve["beta"]),
        signal=signal,
        kind=UtilityKind(DSH, lam=config.utility["lam"]),
        capacity_C=None,
        market=market,
    )


def method_kind(method: str, config: ExperimentConfig) -> UtilityKind:
    """Utility family realizing each method.

    Supply-chain shaping embeds the curve benefit and the KKT-aligned index
    penalty on top of the experiment's quadratic costs, so the shaped game's
    potential is exactly W - z * load; the agentic market shapes with the
    energy family priced by the index.  Both baselines drop the curve:
    price-only keeps log(1+x) rewards and ignores the index, and the
    tatonnement ablation answers the index with linearized rewards.
    """
    lam = config.utility["lam"]
    if method == "shaped":
        if config.experiment == "agentic":
            return UtilityKind(AGENTIC_BID, lam=lam)
        return UtilityKind(DSH, lam=lam, index_priced=True)
    if method == "price_only":
        return UtilityKind(PRICE_ONLY, lam=lam)
    if method == "tatonnement_only":
        return UtilityKind(PRICE_ONLY, lam=lam, linearized=True)
    raise ValueError(f"unknown decentralized method {method!r}")


@dataclass
class RunOutput:
    run_index: int
    capacity: Optional[float]
    w_star: float
    w_star_equal_budget: float
    results: dict  # method -> RunResult
    kpi: dict      # method -> KpiRecord
    error: Optional[str] = None


def _dynamics_config(config: ExperimentConfig) -> DynamicsConfig:
    return DynamicsConfig(**config.dynamics)


def _initial_index(scored: GameModel, config: ExperimentConfig, bench) -> float:
    """Broadcast warm start for the public index.

    The operator posts a clearing estimate for the shaped game: the smallest
    index level whose tabulated best-response load is at most 95% of the
    capacity.  Trajectories then approach the capacity from the feasible side
    (the dual glides down) instead of grinding an overload through the slow
    dual mode.  The inversion uses the upper branch of the per-agent marginal
    curves, matching gradient play that descends from an active state.
    """
    import dataclasses as _dc

    shaped = _dc.replace(scored, kind=method_kind("shaped", config))
    levels = np.linspace(0.0, 1.0, 65)
    grid = shaped.lower + levels[:, None] * (shaped.upper - shaped.lower)
    marginals = np.array([-shaped.pseudo_gradient(grid[k], 0.0) for k in range(len(levels))])

    def load_at(z: float) -> float:
        active = marginals >= z
        # largest grid level per agent whose marginal still covers the index
        idx = len(levels) - 1 - np.argmax(active[::-1], axis=0)
        has = np.any(active, axis=0)
        p_hat = np.where(has, grid[idx, np.arange(shaped.n)], shaped.lower)
        return float(np.sum(p_hat))

    target = 0.95 * float(scored.capacity_C)
    if load_at(0.0) <= target:
        return 0.0
    z_lo, z_hi = 0.0, float(np.max(marginals))
    for _ in range(60):
        mid = 0.5 * (z_lo + z_hi)
        if load_at(mid) > target:
            z_lo = mid
        else:
            z_hi = mid
    return z_hi


def run_one(config: ExperimentConfig, run_index: int) -> RunOutput:
    """Execute every method of one seeded run against a shared model draw."""
    base = build_run_model(config, run_index)
    cfg = _dynamics_config(config)
    budget = max(cfg.max_iters, 1)
    high_budget = 10 * budget

    cap_cfg = config.capacity
    if cap_cfg["mode"] == "planner_fraction":
        unconstrained = centralized_proximal(base, budget=high_budget, tol=1e-8)
        capacity = cap_cfg["fraction"] * float(np.sum(unconstrained.p_star))
    elif cap_cfg["mode"] == "fixed":
        capacity = float(cap_cfg["value"])
    else:
        capacity = None

    import dataclasses as _dc
    scored = _dc.replace(base, capacity_C=capacity)
    bench = centralized_capped_proximal(scored, budget=high_budget, tol=1e-8)
    w_star = bench.w_star

    equal_budget = centralized_trajectory(scored, iters=budget, w_star=w_star)
    w_star_budget = float(equal_budget.welfare[-1])

    results: dict[str, RunResult] = {}
    kpi: dict[str, KpiRecord] = {}
    noise_seed = [config.base_seed, run_index, 1]
    z0 = _initial_index(scored, config, bench) if capacity is not None else 0.0
    try:
        for method in config.methods:
            if method == "centralized":
                run = equal_budget
                run.seed = tuple(noise_seed)
            else:
                model = _dc.replace(scored, kind=method_kind(method, config))
                run = run_trajectory(model, cfg, w_star, seed=noise_seed, method=method,
                                     z0=z0)
            run.method = method
            results[method] = run
            rec = kpis(run, cfg.epsilon)
            kpi[method] = _dc.replace(rec, seed=run_index, method=method)
    except DivergenceError as exc:
        return RunOutput(run_index, capacity, w_star, w_star_budget, results={}, kpi={},
                         error=str(exc))
    return RunOutput(run_index, capacity, w_star, w_star_budget, results, kpi)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


def _write_trace(path: Path, run: RunResult) -> None:
    lines = ["iter,W,gap,load,violation,z"]
    for t in range(len(run.gap)):
        lines.append(",".join([
            str(t + 1), _fmt(run.welfare[t]), _fmt(run.gap[t]), _fmt(run.load[t]),
            _fmt(run.violation[t]), _fmt(run.z[t]),
        ]))
    path.write_text("\n".join(lines) + "\n")


_KPI_COLUMNS = ("method", "run", "terminal_gap", "violation_rate", "iterations_to_eps",
                "alpha_hat", "w_star", "capacity")


def _summarize(config: ExperimentConfig, outputs: list[RunOutput]) -> dict:
    ok = [o for o in outputs if o.error is None]
    summary: dict = {
        "experiment": config.experiment,
        "name": config.name,
        "runs": config.runs,
        "completed": len(ok),
        "aborted": [
            {"run": o.run_index, "reason": o.error} for o in outputs if o.error is not None
        ],
        "methods": {},
        "significance": {},
    }
    if ok:
        summary["w_star"] = dict(zip(("median", "q1", "q3"), median_iqr([o.w_star for o in ok])))
        summary["w_star_equal_budget"] = dict(zip(
            ("median", "q1", "q3"), median_iqr([o.w_star_equal_budget for o in ok])))
    for method in config.methods:
        recs = [o.kpi[method] for o in ok if method in o.kpi]
        if not recs:
            continue
        block = {}
        for name, get in (("terminal_gap", lambda r: r.terminal_gap),
                          ("violation_rate", lambda r: r.violation_rate),
                          ("iterations_to_eps", lambda r: float(r.iterations_to_eps))):
            med, q1, q3 = median_iqr([get(r) for r in recs])
            block[name] = {"median": med, "q1": q1, "q3": q3}
        alphas = [r.alpha_hat for r in recs if not math.isnan(r.alpha_hat)]
        if alphas:
            med, q1, q3 = median_iqr(alphas)
            block["alpha_hat"] = {"median": med, "q1": q1, "q3": q3}
        summary["methods"][method] = block

    if "price_only" in config.methods and ok:
        base = {o.run_index: o.kpi["price_only"] for o in ok if "price_only" in o.kpi}
        tests = []
        for method in config.methods:
            if method == "price_only":
                continue
            pairs = [(o.kpi[method], base[o.run_index]) for o in ok
                     if method in o.kpi and o.run_index in base]
            if len(pairs) < 2:
                continue
            for kpi_name, get in (("terminal_gap", lambda r: r.terminal_gap),
                                  ("violation_rate", lambda r: r.violation_rate)):
                diffs = np.array([get(a) - get(b) for a, b in pairs])
                tests.append((f"{method}_vs_price_only.{kpi_name}",
                              wilcoxon_signed_rank(diffs)))
        if tests:
            rejected = fdr_bh([p for _, p in tests], q=0.05)
            summary["significance"] = {
                name: {"p": p, "rejected_at_5pct_fdr": bool(rej)}
                for (name, p), rej in zip(tests, rejected)
            }
    return summary


def run_experiment(config: ExperimentConfig, out_dir, threads: int = 1) -> int:
    """Run all seeded runs and methods; emit traces, kpi.csv, and summary.json.

    Returns the process exit code: 0 on success, 1 when more than 10% of the
    runs aborted.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    indices = list(range(config.runs))
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run_one, [config] * len(indices), indices))
    else:
        outputs = [run_one(config, i) for i in indices]

    kpi_lines = [",".join(_KPI_COLUMNS)]
    for o in outputs:
        for method, run in o.results.items():
            _write_trace(out / f"trace_{method}_{o.run_index}.csv", run)
        for method in config.methods:
            if method not in o.kpi:
                continue
            r = o.kpi[method]
            kpi_lines.append(",".join([
                method, str(o.run_index), _fmt(r.terminal_gap), _fmt(r.violation_rate),
                str(r.iterations_to_eps), _fmt(r.alpha_hat), _fmt(o.w_star),
                _fmt(o.capacity),
            ]))
    (out / "kpi.csv").write_text("\n".join(kpi_lines) + "\n")

    summary = _summarize(config, outputs)
    summary["config"] = config.raw
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    aborted = sum(1 for o in outputs if o.error is not None)
    return 1 if aborted > 0.10 * max(config.runs, 1) else 0
