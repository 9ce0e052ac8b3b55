"""Moduli estimation, stepsize regions, KPI computation, and statistics.

Includes the two nonparametric procedures the experiment reports rely on
(exact/approximate Wilcoxon signed-rank with Pratt zero handling, and
Benjamini-Hochberg step-up) plus the contraction fit and tracking error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .benchmarks import centralized_proximal
from .curve import ResponseCurve
from .dynamics import RunResult
from .model import SUPPLY_CHAIN, GameModel

__all__ = [
    "Moduli",
    "StepsizeRegion",
    "KpiRecord",
    "estimate_moduli",
    "estimate_moduli_from",
    "stepsize_region",
    "fit_contraction",
    "kpis",
    "tracking_error",
    "wilcoxon_signed_rank",
    "fdr_bh",
    "median_iqr",
    "fit_curve",
]

_VIOLATION_EPS = 1e-9


@dataclass(frozen=True)
class Moduli:
    """Estimated strong-monotonicity and Lipschitz moduli of the pseudo-gradient."""

    mu_hat: float
    l_hat: float
    n_pairs: int

    def __post_init__(self) -> None:
        if self.mu_hat < 0 or self.l_hat <= 0:
            raise ValueError("need mu_hat >= 0 and l_hat > 0")
        if self.mu_hat > self.l_hat + 1e-12:
            raise ValueError("mu_hat cannot exceed l_hat")


@dataclass(frozen=True)
class StepsizeRegion:
    """Contraction region summary for damped projected gradient steps."""

    eta_max: float
    q: float
    alpha: float
    contractive: bool


@dataclass(frozen=True)
class KpiRecord:
    """Per-run KPI summary used by experiment tables."""

    terminal_gap: float
    violation_rate: float
    iterations_to_eps: int
    alpha_hat: float
    tracking_error: Optional[float] = None
    seed: object = None
    method: str = ""


def estimate_moduli_from(F: Callable[[np.ndarray], np.ndarray], lower, upper,
                         n_pairs: int, rng: np.random.Generator) -> Moduli:
    """Sample pairs in the box and bound the operator's moduli from them.

    mu_hat = min <F(p)-F(q), p-q> / ||p-q||^2 clamped at zero, and
    l_hat = max ||F(p)-F(q)|| / ||p-q||, floored at a tiny positive value.
    """
    if n_pairs < 2:
        raise ValueError("need at least two sampled pairs")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mu = np.inf
    lip = 0.0
    done = 0
    while done < n_pairs:
        p = rng.uniform(lower, upper)
        q = rng.uniform(lower, upper)
        d = p - q
        nd2 = float(np.dot(d, d))
        if nd2 <= 1e-24:
            continue
        df = F(p) - F(q)
        mu = min(mu, float(np.dot(df, d)) / nd2)
        lip = max(lip, float(np.linalg.norm(df)) / math.sqrt(nd2))
        done += 1
    return Moduli(mu_hat=max(0.0, mu), l_hat=max(lip, 1e-12), n_pairs=n_pairs)


def estimate_moduli(model: GameModel, z: float, n_pairs: int,
                    rng: np.random.Generator) -> Moduli:
    """Moduli of the model's pseudo-gradient at index level z."""
    return estimate_moduli_from(lambda p: model.pseudo_gradient(p, z),
                                model.lower, model.upper, n_pairs, rng)


def stepsize_region(moduli: Moduli, eta: float, rho: float) -> StepsizeRegion:
    """Contraction factor alpha = (1-rho) + rho*sqrt(1 - 2*eta*mu + eta^2*L^2).

    eta_max = 2*mu/L^2; steps at or past it are flagged non-contractive.
    """
    eta_max = 2.0 * moduli.mu_hat / moduli.l_hat**2
    q = math.sqrt(max(0.0, 1.0 - 2.0 * eta * moduli.mu_hat + eta**2 * moduli.l_hat**2))
    alpha = (1.0 - rho) + rho * q
    return StepsizeRegion(eta_max=eta_max, q=q, alpha=alpha, contractive=eta < eta_max)


def fit_contraction(gap_series: np.ndarray, window: tuple[int, int] = (50, 250)) -> float:
    """Empirical contraction factor: exp(slope of log-gap on the window).

    Nonpositive gaps shrink the window to its positive prefix; fewer than two
    usable points yield nan.
    """
    gap = np.asarray(gap_series, dtype=float)
    lo, hi = window
    lo = max(0, min(lo, len(gap)))
    hi = min(hi, len(gap))
    seg = gap[lo:hi]
    bad = np.nonzero(seg <= 0)[0]
    if len(bad):
        seg = seg[: bad[0]]
    if len(seg) < 2:
        return float("nan")
    t = np.arange(len(seg), dtype=float)
    slope = np.polyfit(t, np.log(seg), 1)[0]
    return float(np.exp(slope))


def kpis(run: RunResult, epsilon: float) -> KpiRecord:
    """Terminal gap, tail violation rate, iterations to epsilon, contraction fit.

    The violation rate is the fraction of the last ceil(T/4) iterations whose
    capacity excess is above 1e-9; iterations-to-epsilon is the first
    iteration with a feasible gap at most epsilon, else T.
    """
    T = len(run.gap)
    if T == 0:
        raise ValueError("empty run")
    tail = int(math.ceil(T / 4))
    violation_rate = float(np.mean(run.violation[T - tail:] > _VIOLATION_EPS))
    ok = (run.gap <= epsilon) & (run.violation <= _VIOLATION_EPS)
    hits = np.nonzero(ok)[0]
    iters = int(hits[0]) + 1 if len(hits) else T
    return KpiRecord(
        terminal_gap=float(run.gap[-1]),
        violation_rate=violation_rate,
        iterations_to_eps=iters,
        alpha_hat=fit_contraction(run.gap),
        seed=run.seed,
        method=run.method,
    )


def tracking_error(run: RunResult, model: GameModel, recompute_every: int = 25,
                   budget: int = 4000, tol: float = 1e-10) -> float:
    """Steady-state mean ||p_t - p*_t|| over the last quarter of the run.

    p*_t is the drifting benchmark solution, recomputed every
    ``recompute_every`` iterations from the recorded drifted parameters (or
    fixed, when the run had no drift).  Requires the run to have recorded
    its action series.
    """
    if run.p_series is None:
        raise ValueError("tracking error needs run_trajectory(record_actions=True)")
    T = len(run.p_series)
    start = T - int(math.ceil(T / 4))
    drift_param = "cost_a" if model.market == SUPPLY_CHAIN else "theta"
    p_star_cache: dict[int, np.ndarray] = {}
    errs = []
    warm = None
    for t in range(start, T):
        key = (t // recompute_every) * recompute_every if run.drift_series is not None else -1
        if key not in p_star_cache:
            m = model if key < 0 else model.with_params(**{drift_param: run.drift_series[key]})
            warm = centralized_proximal(m, budget=budget, tol=tol, p0=warm).p_star
            p_star_cache[key] = warm
        errs.append(np.linalg.norm(run.p_series[t] - p_star_cache[key]))
    return float(np.mean(errs))


# ----------------------------------------------------------------- statistics


def _pratt_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |d| including zeros; returns (ranks of nonzeros, signs)."""
    d = np.asarray(diffs, dtype=float)
    order = np.argsort(np.abs(d), kind="stable")
    ranks = np.empty(len(d))
    sorted_abs = np.abs(d)[order]
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    nz = d != 0
    return ranks[nz], np.sign(d[nz])


def wilcoxon_signed_rank(paired_diffs) -> float:
    """Two-sided Wilcoxon signed-rank p-value with Pratt handling of zeros.

    Exact enumeration of all sign assignments when at most 12 nonzero
    differences remain; otherwise a normal approximation with continuity
    correction (average ranks make the variance tie-exact).
    """
    d = np.asarray(paired_diffs, dtype=float)
    if d.size < 1:
        raise ValueError("need at least one paired difference")
    ranks, signs = _pratt_ranks(d)
    if len(ranks) == 0:
        return 1.0
    w_obs = float(np.sum(ranks[signs > 0]))
    if len(ranks) <= 12:
        sums = np.zeros(1)
        for r in ranks:
            sums = np.concatenate([sums, sums + r])
        total = len(sums)
        p = 2.0 * min(np.sum(sums <= w_obs + 1e-9), np.sum(sums >= w_obs - 1e-9)) / total
        return float(min(1.0, p))
    mean = float(np.sum(ranks)) / 2.0
    sd = math.sqrt(float(np.sum(ranks**2)) / 4.0)
    if sd == 0:
        return 1.0
    cc = 0.5 if w_obs != mean else 0.0
    zval = (abs(w_obs - mean) - cc) / sd
    return float(min(1.0, math.erfc(max(zval, 0.0) / math.sqrt(2.0))))


def fdr_bh(p_values, q: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up rejections at FDR level q."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    thresh = q * (np.arange(1, m + 1) / m)
    passed = np.nonzero(p[order] <= thresh)[0]
    reject = np.zeros(m, dtype=bool)
    if len(passed):
        reject[order[: passed[-1] + 1]] = True
    return reject


def median_iqr(values) -> tuple[float, float, float]:
    """(median, Q1, Q3) with linear-interpolation quantiles."""
    v = np.asarray(values, dtype=float)
    return (float(np.percentile(v, 50)), float(np.percentile(v, 25)),
            float(np.percentile(v, 75)))


def fit_curve(x: Sequence[float], y: Sequence[float]) -> ResponseCurve:
    """Least-squares (kappa, beta) fit of exp(-(kappa/x)^beta) to signal/reliability data.

    Linear regression of log(-log y) on log x; points with y outside (0, 1)
    are ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & (y < 1)
    if np.sum(keep) < 2:
        raise ValueError("need at least two usable calibration points")
    t = np.log(-np.log(y[keep]))
    slope, intercept = np.polyfit(np.log(x[keep]), t, 1)
    beta = -slope
    if beta <= 0:
        raise ValueError("data are not consistent with an increasing response curve")
    kappa = math.exp(intercept / beta)
    return ResponseCurve(kappa=kappa, beta=beta)
