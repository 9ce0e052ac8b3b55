"""Centralized planner benchmarks: proximal ascent and primal-dual solutions.

These define the welfare targets W* that decentralized runs are scored
against.  Three solvers:

* ``centralized_proximal``       projected gradient ascent on welfare over the box.
* ``centralized_capped_proximal`` the same ascent with the capacity folded into
  the projection (box intersect sum(p) <= C), which cannot overshoot the
  constraint and is what experiment scoring uses when a capacity is active.
* ``centralized_primal_dual``    alternating primal ascents on W - z*sum(p) with
  dual updates of z (continuation plus a safeguarded bracket), reporting a
  KKT point with its multiplier.

The response curve is flat at zero action, so a solver that lets the price
overshoot can strand agents at zero with exactly zero gradient; the
continuation logic and the capped projection both exist to avoid that trap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import GameModel

__all__ = [
    "BenchmarkResult",
    "capped_projection",
    "centralized_proximal",
    "centralized_capped_proximal",
    "centralized_primal_dual",
    "centralized_trajectory",
]


@dataclass(frozen=True)
class BenchmarkResult:
    p_star: np.ndarray
    z_star: Optional[float]
    w_star: float
    iterations: int
    converged: bool


def capped_projection(p: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                      cap: Optional[float]) -> np.ndarray:
    """Euclidean projection onto {lower <= q <= upper, sum(q) <= cap}.

    Uniform-shift waterfilling q = clip(p - nu): sum(q) is piecewise linear
    and decreasing in nu, so the exact shift falls out of one sorted sweep of
    the 2N clip breakpoints.
    """
    q = np.clip(p, lower, upper)
    if cap is None or float(np.sum(q)) <= cap:
        return q
    breaks = np.unique(np.concatenate([p - upper, p - lower]))
    breaks = breaks[breaks > 0.0]
    sums = np.clip(p[None, :] - breaks[:, None], lower[None, :], upper[None, :]).sum(axis=1)
    idx = int(np.searchsorted(-sums, -cap))
    lo_nu = 0.0 if idx == 0 else breaks[idx - 1]
    s_lo = float(np.sum(q)) if idx == 0 else sums[idx - 1]
    # within a segment only the strictly-interior coordinates move with nu
    free = (p - lo_nu > lower + 1e-15) & (p - lo_nu < upper + 1e-15)
    n_free = max(int(np.sum(free)), 1)
    nu = lo_nu + (s_lo - cap) / n_free
    q = np.clip(p - nu, lower, upper)
    for _ in range(3):  # sweep off any float-level residual excess
        excess = float(np.sum(q)) - cap
        if excess <= 0:
            break
        free = q > lower + 1e-15
        q = np.clip(q - excess / max(int(np.sum(free)), 1), lower, upper)
    return q


def _ascent(model: GameModel, p0: np.ndarray, budget: int, tol: float,
            z_price: float = 0.0, cap: Optional[float] = None,
            ) -> tuple[np.ndarray, float, int, bool, float]:
    """Projected gradient ascent with backtracking on W(p) - z_price * sum(p).

    ``cap`` folds the capacity halfspace into the projection.  Returns
    (best p, best value, iterations, converged, last projection shift nu).
    """

    def proj(p: np.ndarray) -> np.ndarray:
        return capped_projection(p, model.lower, model.upper, cap)

    def value(p: np.ndarray) -> float:
        return model.welfare(p) - z_price * float(np.sum(p))

    def grad(p: np.ndarray) -> np.ndarray:
        g = model.welfare_gradient(p)
        return g - z_price if z_price else g

    p = proj(np.asarray(p0, dtype=float))
    f = value(p)
    best_p, best_f = p.copy(), f
    step = 1.0
    converged = False
    it = 0
    nu = 0.0
    window_f = f
    while it < budget:
        g = grad(p)
        ref = proj(p + g)
        if np.linalg.norm(p - ref) < tol:
            converged = True
            break
        moved = False
        for _ in range(60):
            p_try = proj(p + step * g)
            move = p_try - p
            if float(np.max(np.abs(move))) < 1e-15:
                break
            f_try = value(p_try)
            if f_try >= f + 1e-4 * float(np.dot(g, move)):
                nu = float(np.max(p + step * g - p_try)) if cap is not None else 0.0
                p, f = p_try, f_try
                step = min(step * 1.25, 1e3)
                moved = True
                break
            step *= 0.5
        it += 1
        if f > best_f:
            best_p, best_f = p.copy(), f
        if it % 30 == 0:
            # objective stalled to roundoff over a whole window: accept
            if f - window_f < 1e-13 * max(1.0, abs(f)):
                converged = True
                break
            window_f = f
        if not moved:
            converged = np.linalg.norm(p - ref) < max(tol, 1e-8)
            break
    return best_p, best_f, it, converged, nu


def centralized_proximal(model: GameModel, budget: int = 5000, tol: float = 1e-9,
                         p0: Optional[np.ndarray] = None) -> BenchmarkResult:
    """Projected gradient ascent on welfare over the box; returns the best iterate."""
    start = model.midpoint() if p0 is None else np.asarray(p0, dtype=float)
    p, _, iters, converged, _ = _ascent(model, start, budget, tol)
    return BenchmarkResult(p_star=p, z_star=None, w_star=model.welfare(p),
                           iterations=iters, converged=converged)


def _shadow_price(model: GameModel, p: np.ndarray, cap: float,
                  grad: Optional[np.ndarray] = None) -> float:
    """Multiplier estimate at a capped solution: median active-agent marginal."""
    if float(np.sum(p)) < cap - 1e-9:
        return 0.0
    g = model.welfare_gradient(p) if grad is None else grad
    interior = (p > model.lower + 1e-9) & (p < model.upper - 1e-9)
    if not np.any(interior):
        return max(0.0, float(np.median(g)))
    return max(0.0, float(np.median(g[interior])))


def centralized_capped_proximal(model: GameModel, budget: int = 5000, tol: float = 1e-9,
                                p0: Optional[np.ndarray] = None) -> BenchmarkResult:
    """Projected gradient ascent onto the capacity-capped box.

    Every iterate is feasible, so the ascent cannot be stranded by a
    transiently overshooting price; z_star reports the recovered multiplier.
    """
    if model.capacity_C is None:
        return centralized_proximal(model, budget=budget, tol=tol, p0=p0)
    cap = float(model.capacity_C)
    start = model.midpoint() if p0 is None else np.asarray(p0, dtype=float)
    p, _, iters, converged, _ = _ascent(model, start, budget, tol, cap=cap)
    return BenchmarkResult(p_star=p, z_star=_shadow_price(model, p, cap),
                           w_star=model.welfare(p), iterations=iters, converged=converged)


def centralized_primal_dual(model: GameModel, budget: int = 20000, tol: float = 1e-8,
                            p0: Optional[np.ndarray] = None) -> BenchmarkResult:
    """KKT point of max W(p) s.t. sum(p) <= C by alternating primal/dual ascent.

    The price rises by continuation (primal re-solved warm after every dual
    move), then a safeguarded bracket refines it.  Bracket midpoints restart
    from the infeasible-side primal so agents never get stranded on the flat
    foot of the curve by a price that later comes back down.
    """
    if model.capacity_C is None:
        raise ValueError("primal-dual benchmark requires capacity_C")
    cap = float(model.capacity_C)
    feas_tol = max(tol, 1e-10)
    start = model.midpoint() if p0 is None else np.asarray(p0, dtype=float)

    inner = max(200, budget // 100)
    p, _, it, _, _ = _ascent(model, start, max(inner, budget // 10), tol)
    used = it
    if model.load(p) <= cap + feas_tol:
        return BenchmarkResult(p_star=p, z_star=0.0, w_star=model.welfare(p),
                               iterations=used, converged=True)

    # continuation: raise the price in damped dual steps until feasible
    z_lo, p_lo = 0.0, p
    z_hi: Optional[float] = None
    p_hi = p
    z = 0.0
    excess = model.load(p) - cap
    slope = None
    prev = (z, excess)
    while used < budget and z_hi is None:
        step = excess / slope if slope and slope > 0 else max(0.05, 0.5 * z)
        z = z + min(step, max(1.0, z))
        p, _, it, _, _ = _ascent(model, p, inner, tol, z_price=z)
        used += it
        new_excess = model.load(p) - cap
        if z > prev[0] and new_excess < prev[1]:
            slope = (prev[1] - new_excess) / (z - prev[0])
        prev = (z, new_excess)
        if new_excess <= 0:
            z_hi, p_hi = z, p
        else:
            z_lo, p_lo = z, p
        excess = new_excess

    # safeguarded bisection on the excess load
    for _ in range(200):
        if z_hi is None or used >= budget:
            break
        if abs(model.load(p_hi) - cap) <= feas_tol or (z_hi - z_lo) <= 1e-13 * max(1.0, z_hi):
            break
        z = 0.5 * (z_lo + z_hi)
        p, _, it, _, _ = _ascent(model, p_lo, inner, tol, z_price=z)
        used += it
        if model.load(p) - cap > 0:
            z_lo, p_lo = z, p
        else:
            z_hi, p_hi = z, p

    if z_hi is None:
        return BenchmarkResult(p_star=p_lo, z_star=z_lo, w_star=model.welfare(p_lo),
                               iterations=used, converged=False)
    p_fin, z_fin = p_hi, z_hi
    excess = model.load(p_fin) - cap
    stat = np.linalg.norm(p_fin - np.clip(p_fin + model.welfare_gradient(p_fin) - z_fin,
                                          model.lower, model.upper))
    converged = (excess <= feas_tol) and (abs(z_fin * excess) <= max(1e4 * feas_tol, 1e-6)) \
        and (stat <= max(1e3 * tol, 1e-5))
    return BenchmarkResult(p_star=p_fin, z_star=z_fin, w_star=model.welfare(p_fin),
                           iterations=used, converged=converged)


def centralized_trajectory(model: GameModel, iters: int, eta_z: float = 0.0,
                           w_star: float = 0.0):
    """Equal-budget centralized benchmark: one capped proximal step per iteration.

    The capacity lives in the projection, so every iterate is feasible; the
    z column reports the recovered shadow price along the way.  ``eta_z`` is
    accepted for signature parity with the decentralized runner but the
    capped projection needs no dual state.
    """
    from .dynamics import RunResult

    cap = model.capacity_C
    p = capped_projection(model.midpoint(), model.lower, model.upper, cap)
    welfare = np.empty(iters)
    gap = np.empty(iters)
    load = np.empty(iters)
    violation = np.empty(iters)
    z_series = np.empty(iters)
    step = 1.0
    f = model.welfare(p)
    z_est = 0.0
    t_frozen = iters
    for t in range(iters):
        g = model.welfare_gradient(p)
        if cap is not None and (t % 25 == 0 or t == iters - 1):
            z_est = _shadow_price(model, p, cap, grad=g)
        if t % 25 == 0:
            gmap = capped_projection(p + g, model.lower, model.upper, cap) - p
            if float(np.linalg.norm(gmap)) < 1e-12:
                t_frozen = t
                break
        for _ in range(40):
            p_try = capped_projection(p + step * g, model.lower, model.upper, cap)
            move = p_try - p
            if float(np.max(np.abs(move))) < 1e-15:
                break
            f_try = model.welfare(p_try)
            if f_try >= f + 1e-4 * float(np.dot(g, move)):
                p, f = p_try, f_try
                step = min(step * 1.25, 1e3)
                break
            step *= 0.5
        s = model.load(p)
        welfare[t] = f
        gap[t] = w_star - f
        load[t] = s
        violation[t] = max(0.0, s - cap) if cap is not None else 0.0
        z_series[t] = z_est
    if t_frozen < iters:
        # the iterate is a fixed point to machine precision; the tail is flat
        s = model.load(p)
        welfare[t_frozen:] = f
        gap[t_frozen:] = w_star - f
        load[t_frozen:] = s
        violation[t_frozen:] = max(0.0, s - cap) if cap is not None else 0.0
        z_series[t_frozen:] = z_est
    return RunResult(welfare=welfare, gap=gap, load=load, violation=violation,
                     z=z_series, terminal_p=p.copy(), seed=None, method="centralized",
                     w_star=w_star)
