"""Small default model instances used by property tests and diagnostics.

These sit on the operating range where the response curve is past its
inflection, so the pseudo-gradient is strongly monotone over the whole box;
the full-scale experiment populations intentionally include the flat foot of
the curve, where monotonicity is a local, not global, property.
"""

from __future__ import annotations

import numpy as np

from .curve import ResponseCurve
from .model import (AGENTIC, AGENTIC_BID, DSH, SUPPLY_CHAIN, AgentSpec, GameModel,
                    SignalMap, UtilityKind)

__all__ = ["default_supply_model", "default_agentic_model", "decoupled_model"]


def default_supply_model(n: int = 5, seed: int = 0, coupling_row_sum: float = 0.0) -> GameModel:
    """Monotone supply-chain instance: benefit-minus-priced-cost agents.

    Boxes start at 0.6 so signals stay past the curve's inflection; quadratic
    costs carry the curvature that makes the full-box operator monotone.
    """
    rng = np.random.default_rng(seed)
    agents = [
        AgentSpec(
            lower=0.6,
            upper=float(rng.uniform(1.2, 1.5)),
            cost_a=float(rng.uniform(0.15, 0.25)),
            cost_b=0.3,
            theta=1.0,
            rel_v=1.0,
            tier="supplier",
        )
        for _ in range(n)
    ]
    coupling = None
    if coupling_row_sum > 0:
        raw = rng.uniform(0.5, 1.0, (n, n))
        np.fill_diagonal(raw, 0.0)
        coupling = raw * (coupling_row_sum / raw.sum(axis=1, keepdims=True))
    return GameModel(
        agents=agents,
        curve=ResponseCurve(2.2, 1.6),
        signal=SignalMap(gain=4.0, coupling=coupling),
        kind=UtilityKind(DSH, lam=1.0),
        market=SUPPLY_CHAIN,
    )


def default_agentic_model(n: int = 5, capacity: float | None = None, seed: int = 0,
                          zeta: float = 0.2) -> GameModel:
    """Monotone bidding-market instance: energy + saturating benefit + index price.

    Boxes start at 0.25 so every feasible signal (gain 10) is past the
    inflection of the reliability benefit.
    """
    rng = np.random.default_rng(seed)
    agents = [
        AgentSpec(
            lower=0.25,
            upper=1.0,
            theta=1.0,
            energy_C=float(rng.uniform(0.02, 0.04)),
            energy_w=1.5,
            rel_v=1.0,
            tier="bot",
        )
        for _ in range(n)
    ]
    return GameModel(
        agents=agents,
        curve=ResponseCurve(2.2, 1.6),
        signal=SignalMap(gain=10.0, congestion_zeta=zeta),
        kind=UtilityKind(AGENTIC_BID, lam=1.0),
        capacity_C=capacity,
        market=AGENTIC,
    )


def decoupled_model(family: str, market: str = SUPPLY_CHAIN, n: int = 4,
                    seed: int = 0, linearized: bool = False, gain: float = 4.0) -> GameModel:
    """Decoupled (no interference, no congestion) instance of any utility family."""
    rng = np.random.default_rng(seed)
    agents = [
        AgentSpec(
            lower=0.0,
            upper=float(rng.uniform(1.0, 1.5)),
            cost_a=float(rng.uniform(0.1, 0.3)),
            cost_b=float(rng.uniform(0.05, 0.15)),
            theta=float(rng.uniform(0.8, 1.4)),
            energy_C=float(rng.uniform(0.01, 0.05)),
            energy_w=float(rng.uniform(1.2, 1.8)),
            rel_v=float(rng.uniform(1.0, 1.6)),
            tier="bot" if market == AGENTIC else "supplier",
        )
        for _ in range(n)
    ]
    return GameModel(
        agents=agents,
        curve=ResponseCurve(2.2, 1.6),
        signal=SignalMap(gain=gain),
        kind=UtilityKind(family, lam=1.0, linearized=linearized),
        capacity_C=None,
        market=market,
    )
