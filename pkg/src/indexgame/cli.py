"""Command-line entry point: run, sweep, analyze, and bench subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import fdr_bh, median_iqr, wilcoxon_signed_rank
from .benchmarks import centralized_primal_dual, centralized_proximal
from .config import ConfigError, load_config
from .experiment import build_run_model, run_experiment, run_one

__all__ = ["main"]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="path to a JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override base_seed")
    p.add_argument("--runs", type=int, default=None, help="override run count")
    p.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for runs")


def _load(args) -> tuple:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if overrides:
        config = config.with_overrides(**overrides)
    out = Path(args.out) if args.out else Path("runs") / config.name
    return config, out


def _cmd_run(args) -> int:
    config, out = _load(args)
    code = run_experiment(config, out, threads=args.threads)
    print(f"wrote {out}/kpi.csv and summary.json ({config.runs} runs, "
          f"{len(config.methods)} methods)")
    return code


def _cmd_sweep(args) -> int:
    config, out = _load(args)
    values = [float(v) for v in args.values.split(",")]
    worst = 0
    rows = []
    for value in values:
        sub = config.with_param(args.param, value)
        sub_out = out / f"{args.param.replace('.', '_')}={value:g}"
        worst = max(worst, run_experiment(sub, sub_out, threads=args.threads))
        summary = json.loads((sub_out / "summary.json").read_text())
        rows.append({"value": value, "methods": summary["methods"]})
        print(f"{args.param} = {value:g}: done")
    (out / "sweep.json").write_text(json.dumps(
        {"param": args.param, "values": values, "rows": rows}, indent=2, sort_keys=True) + "\n")
    return worst


def _cmd_analyze(args) -> int:
    kpi_path = Path(args.dir) / "kpi.csv"
    if not kpi_path.exists():
        print(f"no kpi.csv under {args.dir}", file=sys.stderr)
        return 2
    rows = kpi_path.read_text().strip().splitlines()
    header = rows[0].split(",")
    data = [dict(zip(header, line.split(","))) for line in rows[1:]]
    methods = sorted({d["method"] for d in data})
    by_method = {
        m: {"gap": [float(d["terminal_gap"]) for d in data if d["method"] == m],
            "violation_rate": [float(d["violation_rate"]) for d in data if d["method"] == m]}
        for m in methods
    }
    report = {}
    for m in methods:
        med, q1, q3 = median_iqr(by_method[m]["gap"])
        vmed, vq1, vq3 = median_iqr(by_method[m]["violation_rate"])
        report[m] = {"terminal_gap": [med, q1, q3], "violation_rate": [vmed, vq1, vq3]}
        print(f"{m:>20}: gap {med:.6g} [{q1:.6g}, {q3:.6g}]   "
              f"violations {vmed:.3f} [{vq1:.3f}, {vq3:.3f}]")
    if "price_only" in methods:
        base = {d["run"]: float(d["terminal_gap"]) for d in data if d["method"] == "price_only"}
        names, ps = [], []
        for m in methods:
            if m == "price_only":
                continue
            diffs = [float(d["terminal_gap"]) - base[d["run"]]
                     for d in data if d["method"] == m and d["run"] in base]
            if len(diffs) >= 2:
                names.append(m)
                ps.append(wilcoxon_signed_rank(np.array(diffs)))
        if names:
            rej = fdr_bh(ps, q=0.05)
            for name, p, r in zip(names, ps, rej):
                flag = "significant" if r else "not significant"
                print(f"{name:>20} vs price_only: p = {p:.4g} ({flag} at 5% FDR)")
            report["wilcoxon_vs_price_only"] = dict(zip(names, ps))
    out = Path(args.dir) / "analysis.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_bench(args) -> int:
    config, out = _load(args)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["run,capacity,w_star_unconstrained,w_star,z_star,converged"]
    for run_index in range(config.runs):
        base = build_run_model(config, run_index)
        budget = 10 * max(config.dynamics["max_iters"], 1)
        unc = centralized_proximal(base, budget=budget, tol=1e-10)
        o = run_one(config, run_index)
        if o.capacity is not None:
            import dataclasses as _dc
            scored = _dc.replace(base, capacity_C=o.capacity)
            pd = centralized_primal_dual(scored, budget=4 * budget, tol=1e-9)
            z_star, conv = pd.z_star, pd.converged
        else:
            z_star, conv = 0.0, unc.converged
        lines.append(f"{run_index},{o.capacity if o.capacity is not None else ''},"
                     f"{unc.w_star:.9g},{o.w_star:.9g},{z_star:.9g},{int(conv)}")
        print(lines[-1])
    (out / "bench.csv").write_text("\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="indexgame",
        description="Utility-shaped games with a public index: experiments and analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across parameter values")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted path, e.g. dynamics.eta_z")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="recompute summary statistics from kpi.csv")
    p_an.add_argument("dir", help="experiment output directory")
    p_an.set_defaults(func=_cmd_analyze)

    p_bench = sub.add_parser("bench", help="compute centralized benchmarks per run")
    _add_common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
