"""Independent oracles shared by the test modules.

Everything here deliberately avoids the library's analytic formulas: finite
differences for derivatives, sign-change scans for the inflection, and brute
force for discrete optima.
"""

from __future__ import annotations

import numpy as np

from indexgame import AgentSpec, GameModel, ResponseCurve, SignalMap, UtilityKind
from indexgame.model import AGENTIC, SUPPLY_CHAIN


def numeric_second_diff(curve: ResponseCurve, x: float, rel_step: float = 1e-3) -> float:
    h = rel_step * x
    return (float(curve.rel(x + h)) - 2 * float(curve.rel(x)) + float(curve.rel(x - h))) / h**2


def scan_inflection(curve: ResponseCurve) -> tuple[float, float, int]:
    """Locate the inflection by the sign change of the numeric second difference.

    Returns (x_star, rel(x_star), number of sign changes) on a log-spaced grid
    spanning [kappa/100, 100*kappa]; the refinement bisects the bracket.
    """
    xs = np.geomspace(curve.kappa / 100, curve.kappa * 100, 4001)
    vals = np.array([numeric_second_diff(curve, x) for x in xs])
    scale = np.max(np.abs(vals))
    signs = np.where(np.abs(vals) < 1e-13 * scale, 0, np.sign(vals))
    nonzero = signs[signs != 0]
    changes = int(np.sum(np.abs(np.diff(nonzero)) > 0))
    idx = np.nonzero((signs[:-1] > 0) & (signs[1:] < 0))[0]
    a, b = xs[idx[0]], xs[idx[0] + 1]
    fa = numeric_second_diff(curve, a)
    for _ in range(100):
        m = 0.5 * (a + b)
        fm = numeric_second_diff(curve, m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < 1e-12:
            break
    x_star = 0.5 * (a + b)
    return x_star, float(curve.rel(x_star)), changes


def fd_own_gradient(model: GameModel, p: np.ndarray, z: float, h: float = 1e-6) -> np.ndarray:
    """Central finite difference of -u_i along the own action, per agent."""
    out = np.zeros(model.n)
    for i in range(model.n):
        hi = h * max(1.0, abs(p[i]))
        pp, pm = p.copy(), p.copy()
        pp[i] += hi
        pm[i] -= hi
        out[i] = -(model.utility(i, pp, z) - model.utility(i, pm, z)) / (2 * hi)
    return out


def fd_welfare_gradient(model: GameModel, p: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.zeros(model.n)
    for i in range(model.n):
        hi = h * max(1.0, abs(p[i]))
        pp, pm = p.copy(), p.copy()
        pp[i] += hi
        pm[i] -= hi
        out[i] = (model.welfare(pp) - model.welfare(pm)) / (2 * hi)
    return out


def coupled_model(family: str, market: str = SUPPLY_CHAIN, n: int = 6, seed: int = 7,
                  linearized: bool = False) -> GameModel:
    """Heterogeneous instance with interference (supply) or congestion (agentic)."""
    r = np.random.default_rng(seed)
    coupling = None
    zeta = 0.0
    if market == SUPPLY_CHAIN:
        raw = r.uniform(0.2, 1.0, (n, n))
        np.fill_diagonal(raw, 0.0)
        coupling = raw * (0.3 / raw.sum(axis=1, keepdims=True))
    else:
        zeta = 0.5
    agents = [
        AgentSpec(
            lower=0.0,
            upper=float(r.uniform(1.0, 1.5)),
            cost_a=float(r.uniform(0.1, 0.3)),
            cost_b=float(r.uniform(0.05, 0.15)),
            theta=float(r.uniform(0.8, 1.4)),
            energy_C=float(r.uniform(0.01, 0.05)),
            energy_w=float(r.uniform(1.2, 1.8)),
            rel_v=float(r.uniform(1.0, 1.6)),
            tier="bot" if market == AGENTIC else "processor",
        )
        for _ in range(n)
    ]
    gain = 10.0 if market == AGENTIC else 4.0
    return GameModel(agents=agents, curve=ResponseCurve(2.2, 1.6),
                     signal=SignalMap(gain=gain, coupling=coupling, congestion_zeta=zeta),
                     kind=UtilityKind(family, lam=1.0, linearized=linearized), market=market)


def linear_fit_r2(xs, ys) -> tuple[float, float]:
    """(slope, R^2) of an affine least-squares fit."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = intercept + slope * xs
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    return float(slope), 1.0 - ss_res / ss_tot
