"""Quantized action sets, discrete best responses, and two-layer composition.

Quantization maps the continuous box onto per-agent grids of mesh at most
delta; round-robin discrete best responses then find a pure equilibrium that
tracks the continuous one within the mesh.  The two-layer optimizer couples a
slow discrete selection (modular reward minus convex congestion, cardinality
constrained) with fast continuous play under the shared objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import GameModel

__all__ = [
    "QuantizedBox",
    "TwoLayerProblem",
    "quantize",
    "discrete_best_response",
    "discrete_equilibrium",
    "two_layer_optimize",
]

_TIE_EPS = 1e-12


@dataclass(frozen=True)
class QuantizedBox:
    """Per-agent action grids {lower, lower+delta, ..., upper} with round-down ties."""

    delta: float
    grids: tuple = field(init=False, repr=False)
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __init__(self, lower, upper, delta: float):
        if delta <= 0:
            raise ValueError(f"mesh delta must be > 0, got {delta}")
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError("need lower < upper componentwise")
        grids = []
        for lo, hi in zip(lower, upper):
            g = lo + delta * np.arange(int(np.floor((hi - lo) / delta + 1e-12)) + 1)
            if hi - g[-1] > 1e-12 * max(1.0, delta):
                g = np.append(g, hi)
            else:
                g[-1] = hi
            grids.append(g)
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "grids", tuple(grids))

    @classmethod
    def for_model(cls, model: GameModel, delta: float) -> "QuantizedBox":
        return cls(model.lower, model.upper, delta)


def quantize(p, qbox: QuantizedBox) -> np.ndarray:
    """Componentwise nearest grid point; exact midpoint ties round down."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.empty_like(p)
    for i, (v, g) in enumerate(zip(p, qbox.grids)):
        j = int(np.searchsorted(g, v))
        if j <= 0:
            out[i] = g[0]
        elif j >= len(g):
            out[i] = g[-1]
        else:
            d_lo, d_hi = v - g[j - 1], g[j] - v
            out[i] = g[j - 1] if d_lo <= d_hi + _TIE_EPS else g[j]
    return out


def discrete_best_response(model: GameModel, i: int, p: np.ndarray, z: float,
                           qbox: QuantizedBox) -> float:
    """Exhaustive argmax of u_i over agent i's grid; ties break toward smaller actions."""
    f = model.utility_of_own_action(i, np.asarray(p, dtype=float), z)
    grid = qbox.grids[i]
    best_q, best_u = float(grid[0]), f(float(grid[0]))
    for q in grid[1:]:
        u = f(float(q))
        if u > best_u + _TIE_EPS * max(1.0, abs(best_u)):
            best_q, best_u = float(q), u
    return best_q


def discrete_equilibrium(model: GameModel, qbox: QuantizedBox, z: float = 0.0,
                         max_rounds: int = 200, p0: Optional[np.ndarray] = None) -> np.ndarray:
    """Round-robin discrete best responses to a fixed point.

    Under strictly concave own-payoffs and the deterministic tie rule the
    iteration settles; a cycle past max_rounds raises with a diagnostic.
    """
    p = quantize(model.midpoint() if p0 is None else np.asarray(p0, dtype=float), qbox)
    for _ in range(max_rounds):
        moved = False
        for i in range(model.n):
            q = discrete_best_response(model, i, p, z, qbox)
            if q != p[i]:
                p[i] = q
                moved = True
        if not moved:
            return p
    raise RuntimeError(f"discrete best responses did not settle within {max_rounds} rounds")


@dataclass(frozen=True)
class TwoLayerProblem:
    """Slow discrete selection a in {0,1}^N, |a| <= k, scored by
    A(a) = sum_i r_i a_i - phi(sum_i a_i) with convex nondecreasing phi,
    composed with the continuous game welfare over the selected agents."""

    rewards: Sequence[float]
    phi: Callable[[float], float]
    cardinality: int
    model: Optional[GameModel] = None

    def __post_init__(self) -> None:
        if self.cardinality < 0:
            raise ValueError("cardinality bound must be >= 0")
        if self.model is not None and self.model.n != len(self.rewards):
            raise ValueError("model size must match the number of discrete items")

    def score(self, a: np.ndarray) -> float:
        a = np.asarray(a, dtype=bool)
        return float(np.sum(np.asarray(self.rewards)[a]) - self.phi(float(np.sum(a))))


def _masked_welfare_max(model: GameModel, mask: np.ndarray, budget: int = 2000,
                        tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Maximize welfare over the selected coordinates; others pinned at lower."""
    p = np.where(mask, model.midpoint(), model.lower)
    if not np.any(mask):
        return p, model.welfare(p)
    step = 1.0
    f = model.welfare(p)
    for _ in range(budget):
        g = model.welfare_gradient(p) * mask
        if np.linalg.norm(p - np.where(mask, model.project(p + g), p)) < tol:
            break
        for _ in range(40):
            p_try = np.where(mask, model.project(p + step * g), p)
            f_try = model.welfare(p_try)
            if f_try >= f + 1e-4 * float(np.dot(g, p_try - p)):
                p, f = p_try, f_try
                step = min(step * 1.5, 1e6)
                break
            step *= 0.5
        else:
            break
    return p, f


def two_layer_optimize(problem: TwoLayerProblem,
                       budget: int = 2000) -> tuple[np.ndarray, Optional[np.ndarray], float, list]:
    """Alternate greedy/local-exchange on the selection with continuous resolves.

    Returns (a_star, p_star, v_star, v_history); v_history is nondecreasing
    across accepted blocks.
    """
    n = len(problem.rewards)
    k = problem.cardinality

    def joint(a: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
        if problem.model is None:
            return problem.score(a), None
        p, w = _masked_welfare_max(problem.model, a, budget)
        return problem.score(a) + w, p

    a = np.zeros(n, dtype=bool)
    v, p = joint(a)
    history = [v]

    improved = True
    while improved:
        improved = False
        best_move, best_v, best_p = None, v, p
        candidates = []
        if np.sum(a) < k:
            candidates += [("add", i) for i in range(n) if not a[i]]
        candidates += [("drop", i) for i in range(n) if a[i]]
        candidates += [("swap", (i, j)) for i in range(n) if a[i] for j in range(n) if not a[j]]
        for kind, idx in candidates:
            a_try = a.copy()
            if kind == "add":
                a_try[idx] = True
            elif kind == "drop":
                a_try[idx] = False
            else:
                i, j = idx
                a_try[i], a_try[j] = False, True
            v_try, p_try = joint(a_try)
            if v_try > best_v + 1e-12:
                best_move, best_v, best_p = a_try, v_try, p_try
        if best_move is not None:
            a, v, p = best_move, best_v, best_p
            history.append(v)
            improved = True
    return a, p, v, history
