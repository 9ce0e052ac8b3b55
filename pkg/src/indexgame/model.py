"""Populations, signal maps, utility families, welfare, and the pseudo-gradient.

A GameModel bundles N agents, one response curve, one signal map, and one
utility family.  All operations are pure; the model is immutable after
construction, so it is safe to share across threads and runs.

Utility families:

* ``dsh``          benefit-minus-priced-cost: theta*log(1+Rel^v) - lam*(a*p + b*p^2)
* ``yang_smith``   energy-plus-saturating-benefit: -C*p^w + log(1+Rel^v)
* ``agentic_bid``  yang_smith with the public index charged per unit: ... - z*p
* ``price_only``   no reliability curve.  Supply-chain form log(1+x) - lam*(a*p+b*p^2)
                   (optionally linearized to x - lam*(...) - z*p, the pure
                   price-adjustment ablation); agentic form theta*log(1+p) - z*p.

Welfare is the unified planner objective shared by every method in an
experiment: sum_i theta_i*log(1+Rel_i^v_i) minus the experiment's cost family.
Index transfers z*p_i are never part of welfare.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .curve import ResponseCurve

__all__ = [
    "AgentSpec",
    "SignalMap",
    "UtilityKind",
    "GameModel",
    "DSH",
    "YANG_SMITH",
    "AGENTIC_BID",
    "PRICE_ONLY",
    "SUPPLY_CHAIN",
    "AGENTIC",
]

DSH = "dsh"
YANG_SMITH = "yang_smith"
AGENTIC_BID = "agentic_bid"
PRICE_ONLY = "price_only"
_FAMILIES = (DSH, YANG_SMITH, AGENTIC_BID, PRICE_ONLY)

SUPPLY_CHAIN = "supply_chain"
AGENTIC = "agentic"
_MARKETS = (SUPPLY_CHAIN, AGENTIC)

_TIERS = ("supplier", "processor", "retailer", "bot")


@dataclass(frozen=True)
class AgentSpec:
    """Per-agent bounds, costs, type, and utility-family parameters."""

    lower: float = 0.0
    upper: float = 1.0
    cost_a: float = 0.2
    cost_b: float = 0.1
    theta: float = 1.0
    energy_C: float = 0.03
    energy_w: float = 1.5
    rel_v: float = 1.0
    tier: str = "bot"

    def __post_init__(self) -> None:
        if not (0.0 <= self.lower < self.upper):
            raise ValueError(f"need 0 <= lower < upper, got [{self.lower}, {self.upper}]")
        if self.cost_b < 0:
            raise ValueError(f"cost_b must be >= 0, got {self.cost_b}")
        if self.energy_C <= 0:
            raise ValueError(f"energy_C must be > 0, got {self.energy_C}")
        if self.energy_w <= 1:
            raise ValueError(f"energy_w must be > 1, got {self.energy_w}")
        if self.rel_v <= 0:
            raise ValueError(f"rel_v must be > 0, got {self.rel_v}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.tier not in _TIERS:
            raise ValueError(f"tier must be one of {_TIERS}, got {self.tier!r}")


@dataclass(frozen=True)
class SignalMap:
    """Effective-signal map x_i = gain * p_i / (1 + (A p)_i + zeta * mean_{j != i} p_j).

    ``coupling`` is the interference matrix A (zero diagonal, row sums < 1,
    keeping coupling weak); ``congestion_zeta`` is the mean-field congestion
    coefficient used by the agentic market.  Either part may be zero.
    """

    gain: float = 1.0
    coupling: Optional[np.ndarray] = None
    congestion_zeta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gain) and self.gain > 0):
            raise ValueError(f"gain must be positive, got {self.gain}")
        if self.congestion_zeta < 0:
            raise ValueError(f"congestion_zeta must be >= 0, got {self.congestion_zeta}")
        if self.coupling is not None:
            a = np.asarray(self.coupling, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError("coupling must be a square matrix")
            if np.any(a < 0):
                raise ValueError("coupling entries must be nonnegative")
            if np.any(np.diag(a) != 0):
                raise ValueError("coupling diagonal must be zero")
            if np.any(a.sum(axis=1) >= 1.0):
                raise ValueError("coupling row sums must be < 1")
            object.__setattr__(self, "coupling", a)


@dataclass(frozen=True)
class UtilityKind:
    """Utility family selector plus the price weight lambda.

    ``linearized`` replaces log(1+x) with x in the price_only supply form and
    charges the index per unit; it realizes the tatonnement-only ablation.
    ``index_priced`` overrides whether the public index is charged per unit
    (None keeps the family default); setting it on dsh embeds the KKT-aligned
    capacity penalty into the benefit-minus-cost family.
    """

    family: str = DSH
    lam: float = 1.0
    linearized: bool = False
    index_priced: Optional[bool] = None

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.linearized and self.family != PRICE_ONLY:
            raise ValueError("linearized applies to the price_only family only")


@dataclass(frozen=True)
class GameModel:
    """Immutable model: agents + curve + signal map + utility family + capacity."""

    agents: Sequence[AgentSpec]
    curve: ResponseCurve
    signal: SignalMap = field(default_factory=SignalMap)
    kind: UtilityKind = field(default_factory=UtilityKind)
    capacity_C: Optional[float] = None
    market: str = SUPPLY_CHAIN

    # derived arrays, filled in __post_init__
    lower: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)
    cost_a: np.ndarray = field(init=False, repr=False)
    cost_b: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)
    energy_C: np.ndarray = field(init=False, repr=False)
    energy_w: np.ndarray = field(init=False, repr=False)
    rel_v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.market not in _MARKETS:
            raise ValueError(f"market must be one of {_MARKETS}, got {self.market!r}")
        agents = tuple(self.agents)
        if not agents:
            raise ValueError("need at least one agent")
        if self.signal.coupling is not None and self.signal.coupling.shape[0] != len(agents):
            raise ValueError("coupling matrix size must match the number of agents")
        if self.capacity_C is not None and self.capacity_C < 0:
            raise ValueError(f"capacity_C must be >= 0, got {self.capacity_C}")
        object.__setattr__(self, "agents", agents)
        for name in ("lower", "upper", "cost_a", "cost_b", "theta", "energy_C", "energy_w", "rel_v"):
            object.__setattr__(self, name, np.array([getattr(a, name) for a in agents], dtype=float))

    # ------------------------------------------------------------------ basics

    @property
    def n(self) -> int:
        return len(self.agents)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lower, self.upper)

    def with_params(self, cost_a: Optional[np.ndarray] = None, theta: Optional[np.ndarray] = None) -> "GameModel":
        """Copy of the model with drifted cost_a and/or theta arrays."""
        agents = []
        for i, a in enumerate(self.agents):
            kw = {}
            if cost_a is not None:
                kw["cost_a"] = float(cost_a[i])
            if theta is not None:
                kw["theta"] = float(theta[i])
            agents.append(dataclasses.replace(a, **kw) if kw else a)
        return dataclasses.replace(self, agents=agents)

    @property
    def index_priced(self) -> bool:
        """Whether the utility charges the public index z per unit of action."""
        if self.kind.index_priced is not None:
            return self.kind.index_priced
        if self.kind.family == AGENTIC_BID:
            return True
        if self.kind.family == PRICE_ONLY:
            return self.market == AGENTIC or self.kind.linearized
        return False

    # ------------------------------------------------------------------ signal

    def _denominators(self, p: np.ndarray) -> np.ndarray:
        d = np.ones(self.n)
        if self.signal.coupling is not None:
            d = d + self.signal.coupling @ p
        z = self.signal.congestion_zeta
        if z > 0 and self.n > 1:
            d = d + z * (np.sum(p) - p) / (self.n - 1)
        return d

    def signals(self, p: np.ndarray) -> np.ndarray:
        """Effective signal of every agent at joint action p."""
        p = np.asarray(p, dtype=float)
        return self.signal.gain * p / self._denominators(p)

    def signal_of(self, p: np.ndarray, i: int) -> float:
        """Effective signal x_i; raises IndexError for an out-of-range agent."""
        if not 0 <= i < self.n:
            raise IndexError(f"agent index {i} out of range for n={self.n}")
        return float(self.signals(p)[i])

    # ------------------------------------------------------- benefit internals

    def _rel_pow(self, x: np.ndarray) -> np.ndarray:
        """Rel(x)^v computed stably as exp(-v * (kappa/x)^beta)."""
        a = self.curve.kappa**self.curve.beta
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-self.rel_v[pos] * a * x[pos] ** (-self.curve.beta))
        return out

    def _benefit_and_slope(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """log(1+Rel^v) and its x-derivative, vectorized over agents.

        The derivative uses v * a * beta * x^-(beta+1) * Rel^v / (1+Rel^v),
        which stays finite as x -> 0 (the exponential dominates every power).
        """
        a = self.curve.kappa**self.curve.beta
        b = self.curve.beta
        val = np.zeros_like(x)
        slope = np.zeros_like(x)
        pos = x > 0
        xp = x[pos]
        xb = xp ** (-b)
        yv = np.exp(-self.rel_v[pos] * a * xb)
        val[pos] = np.log1p(yv)
        slope[pos] = self.rel_v[pos] * a * b * (xb / xp) * yv / (1.0 + yv)
        return val, slope

    def _costs(self, p: np.ndarray) -> np.ndarray:
        """Per-agent experiment cost: quadratic (supply chain) or energy (agentic)."""
        if self.market == SUPPLY_CHAIN:
            return self.cost_a * p + self.cost_b * p**2
        return self.energy_C * p**self.energy_w

    def _costs_prime(self, p: np.ndarray) -> np.ndarray:
        if self.market == SUPPLY_CHAIN:
            return self.cost_a + 2.0 * self.cost_b * p
        return self.energy_C * self.energy_w * p ** (self.energy_w - 1.0)

    # ----------------------------------------------------------------- utility

    def utilities(self, p: np.ndarray, z: float = 0.0) -> np.ndarray:
        """Every agent's utility at (p, z)."""
        p = np.asarray(p, dtype=float)
        fam = self.kind.family
        lam = self.kind.lam
        if fam == DSH:
            val, _ = self._benefit_and_slope(self.signals(p))
            u = self.theta * val - lam * (self.cost_a * p + self.cost_b * p**2)
        elif fam in (YANG_SMITH, AGENTIC_BID):
            val, _ = self._benefit_and_slope(self.signals(p))
            u = -self.energy_C * p**self.energy_w + val
        elif fam == PRICE_ONLY:
            if self.market == AGENTIC:
                u = self.theta * np.log1p(p)
            else:
                x = self.signals(p)
                quad = lam * (self.cost_a * p + self.cost_b * p**2)
                u = (x if self.kind.linearized else np.log1p(x)) - quad
        else:
            raise ValueError(f"unknown utility family {fam!r}")
        if self.index_priced:
            u = u - z * p
        return u

    def utility(self, i: int, p: np.ndarray, z: float = 0.0) -> float:
        return float(self.utilities(p, z)[i])

    def utility_of_own_action(self, i: int, p: np.ndarray, z: float = 0.0):
        """Return a fast scalar callable q -> u_i((q, p_-i), z).

        The signal denominator D_i does not depend on the own action, so it
        is precomputed once; used by best-response search and discrete play.
        """
        p = np.asarray(p, dtype=float)
        d_i = float(self._denominators(p)[i])
        gain = self.signal.gain
        fam = self.kind.family
        lam = self.kind.lam
        a = self.curve.kappa**self.curve.beta
        beta = self.curve.beta
        v = float(self.rel_v[i])
        th = float(self.theta[i])
        ca, cb = float(self.cost_a[i]), float(self.cost_b[i])
        ec, ew = float(self.energy_C[i]), float(self.energy_w[i])

        price = z if self.index_priced else 0.0

        def benefit(q: float) -> float:
            if q <= 0:
                return 0.0
            x = gain * q / d_i
            return math.log1p(math.exp(-v * a * x**-beta))

        if fam == DSH:
            return lambda q: th * benefit(q) - lam * (ca * q + cb * q * q) - price * q
        if fam in (YANG_SMITH, AGENTIC_BID):
            return lambda q: -ec * q**ew + benefit(q) - price * q
        if self.market == AGENTIC:
            return lambda q: th * math.log1p(q) - price * q
        if self.kind.linearized:
            return lambda q: gain * q / d_i - lam * (ca * q + cb * q * q) - price * q
        return lambda q: math.log1p(gain * q / d_i) - lam * (ca * q + cb * q * q) - price * q

    # ----------------------------------------------------------------- welfare

    @property
    def _benefit_weight(self) -> np.ndarray:
        # The agentic planner scores the shaped (type-free) reliability benefit;
        # theta there is the price-only baseline's private valuation, not a
        # welfare weight.  Supply-chain welfare carries theta (1 by default).
        return np.ones(self.n) if self.market == AGENTIC else self.theta

    def welfare(self, p: np.ndarray) -> float:
        """Unified planner welfare; index transfers are never included."""
        p = np.asarray(p, dtype=float)
        val, _ = self._benefit_and_slope(self.signals(p))
        return float(np.sum(self._benefit_weight * val) - self.kind.lam * np.sum(self._costs(p)))

    def welfare_batch(self, actions: np.ndarray) -> np.ndarray:
        """Welfare of each row of a (T, n) block of joint actions."""
        P = np.asarray(actions, dtype=float)
        d = np.ones_like(P)
        if self.signal.coupling is not None:
            d = d + P @ self.signal.coupling.T
        zeta = self.signal.congestion_zeta
        if zeta > 0 and self.n > 1:
            d = d + zeta * (P.sum(axis=1, keepdims=True) - P) / (self.n - 1)
        x = self.signal.gain * P / d
        a = self.curve.kappa**self.curve.beta
        val = np.zeros_like(x)
        pos = x > 0
        rv = np.broadcast_to(self.rel_v, x.shape)
        val[pos] = np.log1p(np.exp(-rv[pos] * a * x[pos] ** (-self.curve.beta)))
        return val @ self._benefit_weight - self.kind.lam * self._costs(P).sum(axis=1)

    def welfare_gradient(self, p: np.ndarray) -> np.ndarray:
        """Full gradient of welfare, including cross-agent signal terms."""
        p = np.asarray(p, dtype=float)
        d = self._denominators(p)
        x = self.signal.gain * p / d
        _, slope = self._benefit_and_slope(x)
        t = self._benefit_weight * slope
        grad = t * self.signal.gain / d - self.kind.lam * self._costs_prime(p)
        # cross terms: dx_i/dp_k = -gain * p_i / D_i^2 * (A_ik + zeta/(n-1)) for k != i
        c = t * self.signal.gain * p / d**2
        if self.signal.coupling is not None:
            grad = grad - self.signal.coupling.T @ c
        zeta = self.signal.congestion_zeta
        if zeta > 0 and self.n > 1:
            grad = grad - zeta / (self.n - 1) * (np.sum(c) - c)
        return grad

    # ---------------------------------------------------------- pseudo-gradient

    def pseudo_gradient(self, p: np.ndarray, z: float = 0.0) -> np.ndarray:
        """Stacked negated own-action derivatives F_i = -du_i/dp_i."""
        p = np.asarray(p, dtype=float)
        fam = self.kind.family
        lam = self.kind.lam
        d = self._denominators(p)
        own = self.signal.gain / d
        if fam == DSH:
            _, slope = self._benefit_and_slope(self.signal.gain * p / d)
            du = self.theta * slope * own - lam * (self.cost_a + 2.0 * self.cost_b * p)
        elif fam in (YANG_SMITH, AGENTIC_BID):
            _, slope = self._benefit_and_slope(self.signal.gain * p / d)
            du = slope * own - self.energy_C * self.energy_w * p ** (self.energy_w - 1.0)
        elif fam == PRICE_ONLY:
            if self.market == AGENTIC:
                du = self.theta / (1.0 + p)
            else:
                quad = lam * (self.cost_a + 2.0 * self.cost_b * p)
                if self.kind.linearized:
                    du = own - quad
                else:
                    du = own / (1.0 + self.signal.gain * p / d) - quad
        else:
            raise ValueError(f"unknown utility family {fam!r}")
        if self.index_priced:
            du = du - z
        return -du

    # --------------------------------------------------------------- potential

    def potential(self, p: np.ndarray, z: float = 0.0) -> float:
        """Exact potential of the stage game at (p, z).

        Exactness of unilateral differences holds for decoupled signal maps;
        with interference coupling the cross terms leave a residual that is
        reported by tests rather than asserted away.
        """
        p = np.asarray(p, dtype=float)
        fam = self.kind.family
        lam = self.kind.lam
        if fam == DSH:
            val, _ = self._benefit_and_slope(self.signals(p))
            phi = float(np.sum(self.theta * val) - lam * np.sum(self.cost_a * p + self.cost_b * p**2))
        elif fam in (YANG_SMITH, AGENTIC_BID):
            val, _ = self._benefit_and_slope(self.signals(p))
            phi = float(np.sum(-self.energy_C * p**self.energy_w + val))
        else:
            if self.market == AGENTIC:
                phi = float(np.sum(self.theta * np.log1p(p)))
            else:
                x = self.signals(p)
                ben = x if self.kind.linearized else np.log1p(x)
                phi = float(np.sum(ben) - lam * np.sum(self.cost_a * p + self.cost_b * p**2))
        if self.index_priced:
            phi -= z * float(np.sum(p))
        return phi

    def load(self, p: np.ndarray) -> float:
        """Aggregate capacity coupling sum_i g_i(p_i) with g_i(p) = p_i."""
        return float(np.sum(p))
