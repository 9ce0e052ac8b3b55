"""Decentralized update rules, the dual index controller, and the run loop.

One trajectory is a strict state recurrence: (optional parameter drift) ->
synchronous agent updates -> damped dual update of the public index ->
bookkeeping.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import AGENTIC, SUPPLY_CHAIN, GameModel

__all__ = [
    "DynamicsConfig",
    "GameState",
    "RunResult",
    "DivergenceError",
    "DAMPED_GRADIENT",
    "BEST_RESPONSE_HYSTERESIS",
    "golden_section_max",
    "step_damped_gradient",
    "step_best_response_hysteresis",
    "step_dual_index",
    "drift_step",
    "run_trajectory",
]

DAMPED_GRADIENT = "damped_gradient"
BEST_RESPONSE_HYSTERESIS = "best_response_hysteresis"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DivergenceError(RuntimeError):
    """Raised when a trajectory's welfare gap blows up past the guard."""


@dataclass(frozen=True)
class DynamicsConfig:
    """Step sizes, damping, hysteresis, noise, drift, and budget for one run."""

    eta: float = 0.1
    rho: float = 0.5
    eta_z: float = 0.05
    hysteresis_h: float = 0.0
    sigma: float = 0.0
    drift_coeff: float = 1.0
    drift_noise_sd: float = 0.0
    max_iters: int = 500
    epsilon: float = 1e-3
    rule: str = DAMPED_GRADIENT
    index_noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.eta_z < 0:
            raise ValueError(f"eta_z must be >= 0, got {self.eta_z}")
        if self.hysteresis_h < 0:
            raise ValueError(f"hysteresis_h must be >= 0, got {self.hysteresis_h}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not (0.0 <= self.drift_coeff <= 1.0):
            raise ValueError(f"drift_coeff must be in [0, 1], got {self.drift_coeff}")
        if self.drift_noise_sd < 0:
            raise ValueError(f"drift_noise_sd must be >= 0, got {self.drift_noise_sd}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.index_noise_sd < 0:
            raise ValueError(f"index_noise_sd must be >= 0, got {self.index_noise_sd}")
        if self.rule not in (DAMPED_GRADIENT, BEST_RESPONSE_HYSTERESIS):
            raise ValueError(f"unknown update rule {self.rule!r}")

    @property
    def drift_active(self) -> bool:
        return self.drift_coeff < 1.0 or self.drift_noise_sd > 0.0


@dataclass
class GameState:
    """Joint action, public index, iteration counter, and drifted parameters."""

    p: np.ndarray
    z: float = 0.0
    t: int = 0
    drift_state: Optional[dict] = None


@dataclass
class RunResult:
    """Per-iteration series plus terminal data for one seeded trajectory."""

    welfare: np.ndarray
    gap: np.ndarray
    load: np.ndarray
    violation: np.ndarray
    z: np.ndarray
    terminal_p: np.ndarray
    seed: object
    method: str = ""
    w_star: float = 0.0
    converged_at: Optional[int] = None
    br_fallbacks: int = 0
    p_series: Optional[np.ndarray] = None
    drift_series: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.gap)


def golden_section_max(f: Callable[[float], float], lo: float, hi: float,
                       tol: float = 1e-8, max_iter: int = 200) -> float:
    """Argmax of a unimodal scalar function on [lo, hi]."""
    a, b = float(lo), float(hi)
    if b <= a:
        return a
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    mid = 0.5 * (a + b)
    # keep the endpoints honest: a boundary maximizer must win exactly
    best = max((f(lo), lo), (f(hi), hi), (f(mid), mid))
    return best[1]


def _is_unimodal(values: np.ndarray, rel_tol: float = 1e-12) -> bool:
    """True when a sampled sequence rises then falls (one sign change)."""
    diffs = np.diff(values)
    scale = max(np.max(np.abs(values)), 1.0)
    signs = np.where(diffs > rel_tol * scale, 1, np.where(diffs < -rel_tol * scale, -1, 0))
    signs = signs[signs != 0]
    if len(signs) == 0:
        return True
    switches = np.sum(np.abs(np.diff(signs)) > 0)
    return switches <= 1 and (signs[0] == 1 or np.all(signs == -1))


def step_damped_gradient(model: GameModel, state: GameState, cfg: DynamicsConfig,
                         rng: np.random.Generator) -> GameState:
    """Synchronous damped projected gradient: p <- Pi[(1-rho)p + rho(p + eta g)]."""
    g = -model.pseudo_gradient(state.p, state.z)
    if cfg.sigma > 0:
        g = g + rng.normal(0.0, cfg.sigma / math.sqrt(model.n), model.n)
    p_new = model.project((1.0 - cfg.rho) * state.p + cfg.rho * (state.p + cfg.eta * g))
    return GameState(p=p_new, z=state.z, t=state.t + 1, drift_state=state.drift_state)


def step_best_response_hysteresis(model: GameModel, state: GameState, cfg: DynamicsConfig,
                                  rng: np.random.Generator) -> tuple[GameState, int]:
    """Synchronous best response with a hysteresis band.

    Each agent maximizes its own utility over its interval by golden-section
    search and moves only when the improvement exceeds the band h.  An agent
    whose sampled utility is not unimodal (bracketing failure) falls back to
    a damped gradient step for this iteration; the count is returned.
    """
    p_hat = state.p.copy()
    fallbacks = 0
    grad_fallback = None
    for i in range(model.n):
        f = model.utility_of_own_action(i, state.p, state.z)
        lo, hi = model.lower[i], model.upper[i]
        probe = np.linspace(lo, hi, 17)
        if not _is_unimodal(np.array([f(q) for q in probe])):
            fallbacks += 1
            if grad_fallback is None:
                grad_fallback = step_damped_gradient(model, state, cfg, rng).p
            p_hat[i] = grad_fallback[i]
            continue
        p_hat[i] = golden_section_max(f, lo, hi)
    moved = np.abs(p_hat - state.p) > cfg.hysteresis_h
    p_new = np.where(moved, p_hat, state.p)
    return GameState(p=p_new, z=state.z, t=state.t + 1, drift_state=state.drift_state), fallbacks


def step_dual_index(state: GameState, model: GameModel, eta_z: float,
                    noise: float = 0.0) -> float:
    """Damped projected dual ascent z' = max(0, z + eta_z (sum_i g_i(p_i) - C))."""
    if model.capacity_C is None:
        raise ValueError("dual index update requires a capacity")
    return max(0.0, state.z + eta_z * (model.load(state.p) - model.capacity_C + noise))


def drift_step(values: np.ndarray, coeff: float, sd: float, rng: np.random.Generator,
               floor: float = 1e-9) -> np.ndarray:
    """AR(1) drift v' = coeff * v + eps with zero-mean normal eps, clamped at floor."""
    if not 0.0 <= coeff <= 1.0:
        raise ValueError(f"drift coefficient must be in [0, 1], got {coeff}")
    out = coeff * np.asarray(values, dtype=float)
    if sd > 0:
        out = out + rng.normal(0.0, sd, out.shape)
    return np.maximum(out, floor)


def run_trajectory(model: GameModel, cfg: DynamicsConfig, w_star: float, seed,
                   p0: Optional[np.ndarray] = None, z0: float = 0.0,
                   method: str = "", record_actions: bool = False) -> RunResult:
    """Run one seeded trajectory and record the per-iteration series.

    Stops at the iteration budget or as soon as the welfare gap drops to
    epsilon at a capacity-feasible point.  The guard aborts (DivergenceError)
    if the gap blows up an order of magnitude past its initial value.
    """
    rng = np.random.default_rng(seed)
    p = model.project(np.asarray(p0, dtype=float) if p0 is not None else model.midpoint())
    state = GameState(p=p, z=float(z0), t=0)
    base = model

    drift_param = "cost_a" if model.market == SUPPLY_CHAIN else "theta"
    if cfg.drift_active:
        state.drift_state = {drift_param: getattr(model, drift_param).copy()}

    n_rec = cfg.max_iters
    welfare = np.empty(n_rec)
    load = np.empty(n_rec)
    violation = np.empty(n_rec)
    z_series = np.empty(n_rec)
    p_series = np.empty((n_rec, model.n))
    drift_series = np.empty((n_rec, model.n)) if cfg.drift_active else None

    # welfare is evaluated in chunks (vectorized) on the static-model path;
    # drift changes the model every iteration, so that path scores inline
    chunk = 50
    scored_to = 0
    gap0 = None
    fallbacks = 0
    converged_at = None
    last_violation = -1
    t_done = 0
    for t in range(cfg.max_iters):
        if cfg.drift_active:
            drifted = drift_step(state.drift_state[drift_param], cfg.drift_coeff,
                                 cfg.drift_noise_sd, rng)
            state.drift_state[drift_param] = drifted
            base = model.with_params(**{drift_param: drifted})

        if cfg.rule == DAMPED_GRADIENT:
            state = step_damped_gradient(base, state, cfg, rng)
        else:
            state, nf = step_best_response_hysteresis(base, state, cfg, rng)
            fallbacks += nf

        if base.capacity_C is not None and cfg.eta_z > 0:
            noise = rng.normal(0.0, cfg.index_noise_sd) if cfg.index_noise_sd > 0 else 0.0
            state.z = step_dual_index(state, base, cfg.eta_z, noise)

        s = base.load(state.p)
        load[t] = s
        violation[t] = max(0.0, s - base.capacity_C) if base.capacity_C is not None else 0.0
        z_series[t] = state.z
        p_series[t] = state.p
        if drift_series is not None:
            drift_series[t] = state.drift_state[drift_param]
        if cfg.drift_active:
            welfare[t] = base.welfare(state.p)
        t_done = t + 1

        if t + 1 == cfg.max_iters or (t + 1) % chunk == 0 or cfg.drift_active:
            if not cfg.drift_active and t_done > scored_to:
                welfare[scored_to:t_done] = model.welfare_batch(p_series[scored_to:t_done])
            for u in range(scored_to, t_done):
                g = w_star - welfare[u]
                if gap0 is None:
                    gap0 = g
                elif u >= 10 and g > 10.0 * max(abs(gap0), 1.0):
                    raise DivergenceError(
                        f"gap {g:.6g} at iteration {u} exceeds 10x the initial gap {gap0:.6g}")
                if violation[u] > 1e-9:
                    last_violation = u
                # converged: the gap is within tolerance and the trailing
                # quarter window (the KPI window) is violation-free
                if g <= cfg.epsilon and (u - last_violation) >= math.ceil((u + 1) / 4):
                    converged_at = u + 1
                    break
            scored_to = t_done
            if converged_at is not None:
                t_done = converged_at
                break

    sl = slice(0, t_done)
    gap = w_star - welfare[sl]
    terminal_p = p_series[t_done - 1].copy() if t_done > 0 else state.p.copy()
    return RunResult(
        welfare=welfare[sl].copy(), gap=gap, load=load[sl].copy(),
        violation=violation[sl].copy(), z=z_series[sl].copy(),
        terminal_p=terminal_p, seed=seed, method=method, w_star=w_star,
        converged_at=converged_at, br_fallbacks=fallbacks,
        p_series=p_series[sl].copy() if record_actions else None,
        drift_series=None if drift_series is None else drift_series[sl].copy(),
    )
