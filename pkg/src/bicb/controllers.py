"""Online bidding policies: each tick maps (campaign, step, stats so far) to bid parameters."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .allocator import TrafficSlice
from .core import AccumStats, BidParams, Campaign, DualVars, epsilon_c, to_bid_params
from .lp import lp_optimal, tightened
from .predictor import PredictorModel
from .solver import BracketError, SolveResult, SolverConfig, _p_floor, solve

log = logging.getLogger(__name__)


class Controller:
    """Base policy.  ``duals`` holds the duals behind the last emitted params, if any."""

    name = "controller"
    duals: Optional[DualVars] = None

    def reset(self):
        self.duals = None

    def on_tick(self, campaign: Campaign, step: int, acc: AccumStats) -> BidParams:
        raise NotImplementedError

    @property
    def flags(self) -> dict:
        return {}


class ManualController(Controller):
    name = "manual"

    def __init__(self, bid: float):
        if not (math.isfinite(bid) and bid > 0):
            raise ValueError(f"manual bid must be positive and finite, got {bid}")
        self.bid = float(bid)
        self.duals = None

    def on_tick(self, campaign, step, acc):
        return BidParams(0.0, self.bid)


def manual_controller(bid: float) -> ManualController:
    return ManualController(bid)


class FixedDualsController(Controller):
    name = "online_lp"

    def __init__(self, duals: DualVars, campaign: Campaign, flags: Optional[dict] = None):
        self.duals = duals
        self.params = to_bid_params(duals, campaign)
        self._flags = flags or {}

    def reset(self):
        pass

    def on_tick(self, campaign, step, acc):
        return self.params

    @property
    def flags(self):
        return dict(self._flags)


def online_lp_controller(history: TrafficSlice, campaign: Campaign,
                         cfg: SolverConfig = SolverConfig()) -> FixedDualsController:
    """Duals of the LP optimum on past traffic, replayed unchanged on new traffic."""
    if len(history) == 0:
        raise ValueError("online LP needs nonempty history")
    sol = lp_optimal(history, campaign, cfg)
    return FixedDualsController(sol.duals, campaign,
                                {"degraded": sol.degraded,
                                 "infeasible_lower_bound": sol.infeasible_lower_bound})


def safety_margin(campaign: Campaign, max_wp: float) -> float:
    """epsilon_c of the campaign, capped at a quarter of the CPC window; 0 when undefined."""
    if not (campaign.has_upper or campaign.has_lower):
        return 0.0
    if campaign.has_upper and not campaign.budget > 2.0 * campaign.cpc_upper:
        return 0.0
    if not campaign.budget > 0:
        return 0.0
    eps = epsilon_c(campaign, max_wp)
    if campaign.has_upper:
        eps = min(eps, 0.25 * (campaign.cpc_upper - campaign.cpc_lower))
    return eps


class BicbController(Controller):
    """Re-solves the duals at every tick against the model's remaining-horizon forecast.

    With ``tighten`` the CPC bounds are pulled inward by :func:`safety_margin`
    before solving, so that forecast error and the discreteness of the
    won set are less likely to push the realized CPC out of the window.
    """

    name = "bicb"

    def __init__(self, model: PredictorModel, cfg: SolverConfig = SolverConfig(),
                 tighten: bool = True):
        self.model = model
        self.cfg = cfg
        self.tighten = tighten
        self._tight = {}
        self.reset()

    def target(self, campaign: Campaign) -> Campaign:
        """Campaign whose bounds the solver actually enforces."""
        if not self.tighten:
            return campaign
        t = self._tight.get(campaign)
        if t is None:
            wp = getattr(getattr(self.model, "traffic", None), "wp", None)
            max_wp = float(wp.max()) if wp is not None and len(wp) else 0.0
            t = self._tight[campaign] = tightened(campaign, safety_margin(campaign, max_wp))
        return t

    def reset(self):
        self.duals = None
        self.params = None
        self.last: Optional[SolveResult] = None
        self.warnings = []
        self.degraded_ticks = 0
        self.infeasible_ticks = 0

    @property
    def flags(self):
        return {"degraded": self.degraded_ticks > 0,
                "infeasible_lower_bound": self.infeasible_ticks > 0}

    def on_tick(self, campaign, step, acc):
        campaign = self.target(campaign)
        if acc.cost >= campaign.budget:
            # nothing left to spend; keep the last bid, execution is budget-capped anyway
            if self.params is None:
                self.duals = DualVars(1.0)
                self.params = to_bid_params(self.duals, campaign)
            return self.params
        resp = self.model.response(campaign, step, acc)
        try:
            res = solve(resp, campaign, warm_start=self.duals, cfg=self.cfg)
        except BracketError as e:
            self.degraded_ticks += 1
            self.warnings.append((step, f"solver bracket failure ({e}); holding bid"))
            if self.params is not None:
                return self.params
            raise
        self.last = res
        bad = res.infeasible_lower_bound or res.degraded
        if res.infeasible_lower_bound:
            self.infeasible_ticks += 1
            self.warnings.append((step, "lower CPC bound unreachable as an auction; holding bid"))
            log.warning("campaign %s step %d: lower CPC bound unreachable", campaign.id, step)
        elif res.degraded:
            self.degraded_ticks += 1
            self.warnings.append((step, "solver degraded; holding bid"))
        if bad and self.params is not None:
            return self.params
        duals = res.duals
        if res.infeasible_lower_bound:
            # first tick: fall back to the budget-only bid
            duals = DualVars(max(duals.p, _p_floor(0.0, self.cfg.dual_floor)))
        self.duals = duals
        self.params = to_bid_params(duals, campaign)
        return self.params


def bicb_controller(model: PredictorModel, cfg: SolverConfig = SolverConfig(),
                    tighten: bool = True) -> BicbController:
    return BicbController(model, cfg, tighten)


@dataclass
class LoopGains:
    kp: float = 0.6
    ki: float = 0.05
    kd: float = 0.0
    i_max: float = 2.0


@dataclass
class PidConfig:
    pacing: LoopGains = field(default_factory=LoopGains)
    cpc: LoopGains = field(default_factory=LoopGains)
    window: int = 3
    reference: Optional[list] = None  # cumulative spend fraction at each step start; uniform if None
    alpha0: float = 1.0
    alpha_min: float = 1e-3
    alpha_max: float = 1e3
    min_factor: float = 0.1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha0 <= alpha_max")


class _Loop:
    def __init__(self, g: LoopGains):
        self.g = g
        self.integral = 0.0
        self.prev = None

    def update(self, e: float) -> float:
        self.integral = min(max(self.integral + e, -self.g.i_max), self.g.i_max)
        d = 0.0 if self.prev is None else e - self.prev
        self.prev = e
        return self.g.kp * e + self.g.ki * self.integral + self.g.kd * d


class PidController(Controller):
    """Multiplicative control of alpha (beta = 0) from pacing and windowed-CPC errors.

    The pacing error compares spend over the last ``window`` steps with the
    spend the reference schedule plans for that window, re-planned from the
    budget left at the window start.  Both errors are relative, so a P-only
    loop multiplies alpha by (1 + kp * e).
    """

    name = "pid"

    def __init__(self, cfg: PidConfig = PidConfig()):
        self.cfg = cfg
        self.reset()

    def reset(self):
        self.alpha = self.cfg.alpha0
        self.pace = _Loop(self.cfg.pacing)
        self.cpc = _Loop(self.cfg.cpc)
        self.snaps = []
        self.duals = None

    def _reference(self, campaign: Campaign, k: int) -> float:
        if self.cfg.reference is not None:
            return self.cfg.reference[min(k, len(self.cfg.reference) - 1)]
        return k / campaign.n_steps

    def pacing_error(self, campaign: Campaign, acc: AccumStats) -> float:
        k = len(self.snaps) - 1
        w = min(self.cfg.window, k)
        old = self.snaps[k - w]
        r0, r1 = self._reference(campaign, k - w), self._reference(campaign, k)
        left = campaign.budget - old.cost
        if r0 >= 1.0 or left <= 0:
            return 0.0
        planned = (r1 - r0) / (1.0 - r0) * left
        if planned <= 0:
            return 0.0
        return min(max((planned - (acc.cost - old.cost)) / planned, -1.0), 1.0)

    def cpc_error(self, campaign: Campaign, acc: AccumStats) -> float:
        old = self.snaps[max(0, len(self.snaps) - 1 - self.cfg.window)]
        w_cost, w_clk = acc.cost - old.cost, acc.clicks - old.clicks
        if w_clk <= 0:
            return 0.0
        w_cpc = w_cost / w_clk
        if campaign.has_upper and w_cpc > campaign.cpc_upper:
            return (campaign.cpc_upper - w_cpc) / campaign.cpc_upper
        if campaign.has_lower and w_cpc < campaign.cpc_lower:
            return (campaign.cpc_lower - w_cpc) / campaign.cpc_lower
        return 0.0

    def on_tick(self, campaign, step, acc):
        self.snaps.append(acc.copy())
        if len(self.snaps) > 1:
            u = self.pace.update(self.pacing_error(campaign, acc))
            ec = self.cpc_error(campaign, acc)
            if ec != 0.0 or self.cpc.integral != 0.0:
                u += self.cpc.update(ec)
            self.alpha = min(max(self.alpha * max(1.0 + u, self.cfg.min_factor),
                                 self.cfg.alpha_min), self.cfg.alpha_max)
        self.duals = DualVars(campaign.value_scale / self.alpha)
        return BidParams(self.alpha, 0.0)


def pid_controller(cfg: PidConfig = PidConfig()) -> PidController:
    return PidController(cfg)


__all__ = [
    "BicbController", "Controller", "FixedDualsController", "LoopGains", "ManualController",
    "PidConfig", "PidController", "bicb_controller", "manual_controller", "online_lp_controller",
    "pid_controller", "safety_margin",
]
