"""Domain types and the closed-form bid / win-decision math.

Every other module decides wins through :func:`wins_mask`, so that the
solver, the replay allocator and the episode runner agree bit-for-bit on
which impressions a given set of dual variables buys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Optional

import numpy as np


class DegenerateDualsError(ValueError):
    """Raised when p + q_u - q_l <= 0 and the bid formula is undefined."""


@dataclass(frozen=True)
class Impression:
    step: int
    pctr: float
    wp: float
    obj: float

    def __post_init__(self):
        if not 0.0 <= self.pctr <= 1.0:
            raise ValueError(f"pctr must be in [0, 1], got {self.pctr}")
        if not self.wp > 0.0:
            raise ValueError(f"wp must be positive, got {self.wp}")
        if not self.obj >= 0.0:
            raise ValueError(f"obj must be nonnegative, got {self.obj}")
        if self.step < 0:
            raise ValueError(f"step must be nonnegative, got {self.step}")

    @property
    def value(self) -> float:
        return self.pctr * self.obj


@dataclass(frozen=True)
class Campaign:
    """Budget, CPC window and schedule of one advertiser.

    ``cpc_upper=inf`` and ``cpc_lower=0`` express the budget-only (BCB)
    setting.
    """

    id: Hashable
    budget: float
    cpc_upper: float = math.inf
    cpc_lower: float = 0.0
    start_step: int = 0
    end_step: int = 47
    manual_bid: Optional[float] = None

    def __post_init__(self):
        if not self.budget >= 0.0:
            raise ValueError(f"budget must be nonnegative, got {self.budget}")
        if self.cpc_lower < 0.0:
            raise ValueError("cpc_lower must be >= 0")
        if self.cpc_upper <= 0.0:
            raise ValueError("cpc_upper must be > 0")
        if self.has_upper and self.has_lower and not self.cpc_upper > self.cpc_lower:
            raise ValueError("need cpc_upper > cpc_lower when both bounds are active")
        if self.start_step > self.end_step:
            raise ValueError("start_step must not exceed end_step")

    @property
    def has_upper(self) -> bool:
        return math.isfinite(self.cpc_upper)

    @property
    def has_lower(self) -> bool:
        return self.cpc_lower > 0.0

    @property
    def value_scale(self) -> float:
        # objective scale of the LP; C_u when finite, else 1 (BCB)
        return self.cpc_upper if self.has_upper else 1.0

    @property
    def n_steps(self) -> int:
        return self.end_step - self.start_step + 1

    def with_bounds(self, cpc_upper: float, cpc_lower: float) -> "Campaign":
        return Campaign(self.id, self.budget, cpc_upper, max(cpc_lower, 0.0),
                        self.start_step, self.end_step, self.manual_bid)


@dataclass(frozen=True)
class DualVars:
    p: float = 0.0
    q_u: float = 0.0
    q_l: float = 0.0

    def __post_init__(self):
        if self.p < 0 or self.q_u < 0 or self.q_l < 0:
            raise ValueError(f"dual variables must be nonnegative: {self}")
        if self.q_u > 0 and self.q_l > 0:
            raise ValueError("at most one of q_u, q_l may be positive")

    @classmethod
    def from_signed(cls, p: float, q: float) -> "DualVars":
        """Build duals from the signed CPC multiplier (q > 0 upper, q < 0 lower)."""
        return cls(p, max(q, 0.0) + 0.0, max(-q, 0.0) + 0.0)  # + 0.0 drops negative zero

    @property
    def q(self) -> float:
        return self.q_u - self.q_l

    @property
    def denom(self) -> float:
        return self.p + self.q_u - self.q_l


@dataclass(frozen=True)
class BidParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"bid parameters must be finite: {self}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def bid(self, obj):
        return self.alpha * obj + self.beta


@dataclass
class AccumStats:
    cost: float = 0.0
    clicks: float = 0.0
    value: float = 0.0
    wins: int = 0
    seen: int = 0

    def __add__(self, other: "AccumStats") -> "AccumStats":
        return AccumStats(self.cost + other.cost, self.clicks + other.clicks,
                          self.value + other.value, self.wins + other.wins,
                          self.seen + other.seen)

    def __iadd__(self, other: "AccumStats") -> "AccumStats":
        self.cost += other.cost
        self.clicks += other.clicks
        self.value += other.value
        self.wins += other.wins
        self.seen += other.seen
        return self

    def copy(self) -> "AccumStats":
        return AccumStats(self.cost, self.clicks, self.value, self.wins, self.seen)

    @property
    def cpc(self) -> float:
        return effective_cpc(self)


def to_bid_params(duals: DualVars, campaign: Campaign) -> BidParams:
    """alpha = C_u / D, beta = (C_u q_u - C_l q_l) / D with D = p + q_u - q_l."""
    d = duals.denom
    if not d > 0.0:
        raise DegenerateDualsError(f"p + q_u - q_l = {d} <= 0")
    shift = -campaign.cpc_lower * duals.q_l
    if duals.q_u > 0.0:
        shift += campaign.cpc_upper * duals.q_u
    return BidParams(campaign.value_scale / d, shift / d)


def bid_price(duals: DualVars, campaign: Campaign, obj):
    """Optimal bid for an impression with value-per-click ``obj``.

    Works elementwise on arrays.
    """
    params = to_bid_params(duals, campaign)
    return params.alpha * obj + params.beta


def wins_mask(params: BidParams, obj, wp):
    # strict: an impression whose bid ties the clearing price is not bought
    return params.alpha * obj + params.beta > wp


def win_decision(duals: DualVars, campaign: Campaign, imp: Impression) -> bool:
    return bool(wins_mask(to_bid_params(duals, campaign), imp.obj, imp.wp))


def effective_cpc(stats: AccumStats) -> float:
    """cost / clicks, with 0 for a campaign that has no clicks yet."""
    if stats.clicks <= 0.0:
        return 0.0
    return stats.cost / stats.clicks


def cpc_ok(stats: AccumStats, campaign: Campaign, slack: float = 0.0) -> bool:
    """Whether realized CPC lies in [C_l - slack, C_u + slack]; zero clicks always pass."""
    if stats.clicks <= 0.0:
        return True
    cpc = stats.cost / stats.clicks
    return campaign.cpc_lower - slack <= cpc <= campaign.cpc_upper + slack


def epsilon_c(campaign: Campaign, max_wp: float) -> float:
    """CPC-bound slack of the greedy 0-1 solution.

    max(2 C_u^2 / (B - 2 C_u), 2 C_l max_wp / B); an absent bound contributes 0.
    """
    b = campaign.budget
    upper = 0.0
    if campaign.has_upper:
        if not b > 2.0 * campaign.cpc_upper:
            raise ValueError(f"epsilon_c needs B > 2*C_u (B={b}, C_u={campaign.cpc_upper})")
        upper = 2.0 * campaign.cpc_upper ** 2 / (b - 2.0 * campaign.cpc_upper)
    if not b > 0.0:
        raise ValueError("epsilon_c needs a positive budget")
    lower = 2.0 * campaign.cpc_lower * max_wp / b
    return max(upper, lower)


def reduced_cost(duals: DualVars, campaign: Campaign, imp: Impression) -> float:
    # per-impression dual r_i; only used by diagnostics
    v = imp.pctr * imp.obj
    lhs = (imp.wp * imp.pctr * duals.p + (imp.wp - campaign.value_scale) * imp.pctr * duals.q_u
           - (imp.wp - campaign.cpc_lower) * imp.pctr * duals.q_l)
    return max(0.0, campaign.value_scale * v - lhs)


__all__ = [
    "AccumStats", "BidParams", "Campaign", "DegenerateDualsError", "DualVars",
    "Impression", "bid_price", "cpc_ok", "effective_cpc", "epsilon_c",
    "reduced_cost", "to_bid_params", "win_decision", "wins_mask",
]
