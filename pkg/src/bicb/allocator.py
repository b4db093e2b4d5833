"""Deterministic replay of traffic under fixed dual variables.

Replay uses expected-value accounting: a won impression adds ``pctr * wp``
to cost, ``pctr`` to clicks and ``pctr * obj`` to value.
"""
from __future__ import annotations

import enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import AccumStats, BidParams, Campaign, DualVars, Impression, to_bid_params, wins_mask


class ReplayMode(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    HARD_BUDGET_STOP = "hard_budget_stop"


class TrafficSlice:
    """Impressions sorted by step, stored column-wise."""

    def __init__(self, step, pctr, wp, obj, step_range: Optional[tuple] = None, validate=True):
        step = np.asarray(step, dtype=np.int64).ravel()
        pctr = np.asarray(pctr, dtype=float).ravel()
        wp = np.asarray(wp, dtype=float).ravel()
        obj = np.asarray(obj, dtype=float).ravel()
        if not (len(step) == len(pctr) == len(wp) == len(obj)):
            raise ValueError("column lengths differ")
        if len(step) and np.any(np.diff(step) < 0):
            order = np.argsort(step, kind="stable")
            step, pctr, wp, obj = step[order], pctr[order], wp[order], obj[order]
        if step_range is None:
            step_range = (int(step[0]), int(step[-1])) if len(step) else (0, -1)
        self.step, self.pctr, self.wp, self.obj = step, pctr, wp, obj
        self.step_range = (int(step_range[0]), int(step_range[1]))
        if validate:
            self._validate()
        self.cost_weight = pctr * wp
        self.value_weight = pctr * obj
        self._offsets = None

    def _validate(self):
        if len(self.step) == 0:
            return
        lo, hi = self.step_range
        if self.step[0] < lo or self.step[-1] > hi:
            raise ValueError(f"steps outside range {self.step_range}")
        if np.any((self.pctr < 0) | (self.pctr > 1)) or np.any(np.isnan(self.pctr)):
            raise ValueError("pctr must lie in [0, 1]")
        if np.any(~(self.wp > 0)):
            raise ValueError("wp must be positive")
        if np.any(~(self.obj >= 0)):
            raise ValueError("obj must be nonnegative")

    @classmethod
    def from_impressions(cls, imps: Iterable[Impression], step_range=None) -> "TrafficSlice":
        imps = list(imps)
        return cls([i.step for i in imps], [i.pctr for i in imps], [i.wp for i in imps],
                   [i.obj for i in imps], step_range)

    @classmethod
    def empty(cls, step_range=(0, 47)) -> "TrafficSlice":
        return cls([], [], [], [], step_range)

    def __len__(self):
        return len(self.step)

    @property
    def impressions(self) -> list:
        return [Impression(int(s), float(c), float(w), float(o))
                for s, c, w, o in zip(self.step, self.pctr, self.wp, self.obj)]

    @property
    def n_steps(self) -> int:
        return self.step_range[1] - self.step_range[0] + 1

    def offsets(self) -> np.ndarray:
        """``offsets[k]`` is the index of the first impression at step ``lo + k``."""
        if self._offsets is None:
            lo, hi = self.step_range
            self._offsets = np.searchsorted(self.step, np.arange(lo, hi + 2), side="left")
        return self._offsets

    def index_range(self, t0: int, t1: int) -> tuple:
        """Half-open index range covering steps t0..t1 inclusive."""
        lo, hi = self.step_range
        t0, t1 = max(t0, lo), min(t1, hi)
        if t0 > t1:
            return 0, 0
        off = self.offsets()
        return int(off[t0 - lo]), int(off[t1 - lo + 1])

    def steps(self, t0: int, t1: int) -> "TrafficSlice":
        a, b = self.index_range(t0, t1)
        return self.take(slice(a, b), (t0, t1))

    def take(self, index, step_range=None) -> "TrafficSlice":
        return TrafficSlice(self.step[index], self.pctr[index], self.wp[index], self.obj[index],
                            step_range or self.step_range, validate=False)

    def with_obj(self, obj) -> "TrafficSlice":
        return TrafficSlice(self.step, self.pctr, self.wp, obj, self.step_range, validate=False)

    def total_cost(self) -> float:
        return float(self.cost_weight.sum())

    @staticmethod
    def concat(slices: Sequence["TrafficSlice"]) -> "TrafficSlice":
        if not slices:
            raise ValueError("nothing to concatenate")
        lo = min(s.step_range[0] for s in slices)
        hi = max(s.step_range[1] for s in slices)
        return TrafficSlice(np.concatenate([s.step for s in slices]),
                            np.concatenate([s.pctr for s in slices]),
                            np.concatenate([s.wp for s in slices]),
                            np.concatenate([s.obj for s in slices]), (lo, hi), validate=False)

    def __repr__(self):
        return f"TrafficSlice(n={len(self)}, steps={self.step_range})"


def budget_stop_mask(costs: np.ndarray, remaining: float) -> np.ndarray:
    """Scan candidates in order, taking each one that still fits the budget.

    An unaffordable candidate is skipped; scanning continues.
    """
    n = len(costs)
    take = np.zeros(n, dtype=bool)
    i = 0
    spent = 0.0
    while i < n:
        cs = spent + np.cumsum(costs[i:])
        k = int(np.searchsorted(cs, remaining, side="right"))
        while k > 0 and cs[k - 1] > remaining:
            k -= 1
        if k:
            take[i:i + k] = True
            spent = float(cs[k - 1])
        i += k + 1
        if i >= n:
            break
        nxt = np.flatnonzero(costs[i:] <= remaining - spent)
        if nxt.size == 0:
            break
        i += int(nxt[0])
    return take


def _replay_arrays(sl: TrafficSlice, params: BidParams, mode: ReplayMode, budget: float,
                   spent: float = 0.0):
    won = wins_mask(params, sl.obj, sl.wp)
    if mode is ReplayMode.HARD_BUDGET_STOP:
        idx = np.flatnonzero(won)
        keep = budget_stop_mask(sl.cost_weight[idx], budget - spent)
        won = np.zeros(len(sl), dtype=bool)
        won[idx[keep]] = True
    return won


def _stats(sl: TrafficSlice, won: np.ndarray) -> AccumStats:
    return AccumStats(float(sl.cost_weight @ won), float(sl.pctr @ won),
                      float(sl.value_weight @ won), int(won.sum()), len(sl))


def replay(sl: TrafficSlice, duals: DualVars, campaign: Campaign,
           mode: ReplayMode = ReplayMode.UNCONSTRAINED) -> AccumStats:
    return replay_params(sl, to_bid_params(duals, campaign), campaign, mode)


def replay_params(sl: TrafficSlice, params: BidParams, campaign: Campaign,
                  mode: ReplayMode = ReplayMode.UNCONSTRAINED, spent: float = 0.0) -> AccumStats:
    won = _replay_arrays(sl, params, mode, campaign.budget, spent)
    return _stats(sl, won)


def won_mask(sl: TrafficSlice, duals: DualVars, campaign: Campaign) -> np.ndarray:
    return wins_mask(to_bid_params(duals, campaign), sl.obj, sl.wp)


def replay_per_step(sl: TrafficSlice, duals: DualVars, campaign: Campaign) -> list:
    """Per-step AccumStats deltas of an unconstrained replay, one per step in range."""
    won = won_mask(sl, duals, campaign)
    lo, _ = sl.step_range
    n = sl.n_steps
    idx = sl.step - lo
    cost = np.bincount(idx, weights=sl.cost_weight * won, minlength=n)
    clicks = np.bincount(idx, weights=sl.pctr * won, minlength=n)
    value = np.bincount(idx, weights=sl.value_weight * won, minlength=n)
    wins = np.bincount(idx, weights=won, minlength=n)
    seen = np.bincount(idx, minlength=n)
    return [AccumStats(float(cost[k]), float(clicks[k]), float(value[k]), int(wins[k]), int(seen[k]))
            for k in range(n)]


class ReplayResponse:
    """Total (cost, clicks) as a function of the duals, from explicit impressions.

    ``weight`` scales each impression's contribution (used by the empirical
    predictor to average several historical periods); ``base`` is the
    already-realized part of the episode.
    """

    def __init__(self, campaign: Campaign, pctr, wp, obj, weight=None,
                 base: Optional[AccumStats] = None, fractional: bool = False):
        self.campaign = campaign
        self.fractional = fractional
        self.wp = np.asarray(wp, dtype=float)
        self.obj = np.asarray(obj, dtype=float)
        pctr = np.asarray(pctr, dtype=float)
        w = pctr if weight is None else pctr * np.asarray(weight, dtype=float)
        self.click_w = w
        self.cost_w = w * self.wp
        self.base_cost = base.cost if base else 0.0
        self.base_clicks = base.clicks if base else 0.0

    @classmethod
    def from_slice(cls, sl: TrafficSlice, campaign: Campaign, base=None, weight=None,
                   fractional=False):
        return cls(campaign, sl.pctr, sl.wp, sl.obj, weight, base, fractional)

    def __call__(self, duals: DualVars) -> tuple:
        won = wins_mask(to_bid_params(duals, self.campaign), self.obj, self.wp)
        return (self.base_cost + float(self.cost_w @ won),
                self.base_clicks + float(self.click_w @ won))

    def p_of_q(self, q: float, budget: float, p_lo: float) -> tuple:
        """Smallest p >= p_lo with cost(p, q) <= budget, located from the sorted breakpoints.

        Each impression wins iff D < tau_i, D = p + q, so cost(D) is a
        right-continuous step function that drops at every tau_i.  Returns
        (p, cost, clicks); with ``fractional`` set, the impressions sitting on
        the breakpoint are bought partially so that cost meets the budget.
        """
        c = self.campaign
        d_lo = p_lo + q
        remaining = budget - self.base_cost
        shift = -c.cpc_lower * max(-q, 0.0)
        if q > 0.0:
            shift += c.cpc_upper * q
        tau = (c.value_scale * self.obj + shift) / self.wp
        live = tau > d_lo
        if float(self.cost_w @ live) <= remaining:
            cost, clk = self(DualVars.from_signed(p_lo, q))
            if cost <= budget:
                return p_lo, cost, clk
        if remaining < 0.0:
            return np.inf, np.nan, np.nan
        # impressions below d_lo never decide the outcome: the result is clamped to d_lo
        d_break = _breaking_value(tau, self.cost_w, remaining)
        d = max(d_break, d_lo)
        p = d - q
        # the decision kernel evaluates alpha*obj + beta > wp; step off round-off ties
        for _ in range(64):
            cost, clk = self(DualVars.from_signed(p, q))
            if cost <= budget:
                break
            p = p + max(abs(p), abs(d), 1e-300) * 1.6e-15
        if self.fractional and d > d_lo:
            on_line = np.flatnonzero(live & (tau == d_break))
            won = wins_mask(to_bid_params(DualVars.from_signed(p, q), c),
                            self.obj[on_line], self.wp[on_line])
            on_line = on_line[~won]
            gc = float(self.cost_w[on_line].sum())
            if gc > 0:
                f = min(1.0, max(0.0, (budget - cost) / gc))
                cost += f * gc
                clk += f * float(self.click_w[on_line].sum())
        return p, cost, clk


def _sorted_break(tau, cost, above, remaining) -> float:
    order = np.argsort(-tau, kind="stable")
    ts = tau[order]
    cs = above + np.cumsum(cost[order])
    k = min(int(np.searchsorted(cs, remaining, side="right")), len(ts) - 1)
    return float(ts[k])


def _breaking_value(tau: np.ndarray, cost: np.ndarray, remaining: float,
                    small: int = 4096, n_sample: int = 1024) -> float:
    """Largest tau whose group breaks the budget when items are bought in decreasing tau.

    A strided sample estimates where the cumulative cost crosses
    ``remaining``; one pass checks that the crossing lies in the band between
    two sample points.  A weighted quickselect then halves the candidate
    band around its median until it is small enough to sort.  Items with
    equal tau stay together.  Requires cost.sum() > remaining.
    """
    above = 0.0
    n = len(tau)
    if n > small:
        stride = n // n_sample
        order = np.argsort(-tau[::stride], kind="stable")
        ts = tau[::stride][order]
        cs = np.cumsum(cost[::stride][order]) * stride
        k = int(np.searchsorted(cs, remaining, side="right"))
        for w in (4, 32):
            top = ts[k - w] if k - w >= 0 else np.inf
            bot = ts[k + w] if k + w < len(ts) else -np.inf
            # masked dot products are much cheaper than boolean indexing here
            a = float(cost @ (tau > top))
            if a > remaining:
                continue
            band = np.flatnonzero((tau > bot) & (tau <= top))
            if a + float(cost[band].sum()) > remaining:
                tau, cost, above = tau[band], cost[band], a
                break
    while len(tau) > small:
        v = np.partition(tau, len(tau) // 2)[len(tau) // 2]
        hi = tau > v
        c_hi = float(cost @ hi)
        if above + c_hi > remaining:
            if hi.all():
                break
            tau, cost = tau[hi], cost[hi]
        else:
            if not hi.any():
                break
            above += c_hi
            tau, cost = tau[~hi], cost[~hi]
    return _sorted_break(tau, cost, above, remaining)


class SmoothedResponse:
    """Continuous analogue of :class:`ReplayResponse`.

    Each impression's value-per-click is spread as N(obj_i, bandwidth^2), so
    cost and clicks become smooth, strictly decreasing functions of p.
    """

    def __init__(self, campaign: Campaign, pctr, wp, obj, bandwidth: float):
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        self.campaign = campaign
        self.wp = np.asarray(wp, dtype=float)
        self.obj = np.asarray(obj, dtype=float)
        self.click_w = np.asarray(pctr, dtype=float)
        self.cost_w = self.click_w * self.wp
        self.bandwidth = bandwidth

    @classmethod
    def from_slice(cls, sl: TrafficSlice, campaign: Campaign, bandwidth: float):
        return cls(campaign, sl.pctr, sl.wp, sl.obj, bandwidth)

    def win_prob(self, duals: DualVars) -> np.ndarray:
        from scipy.special import ndtr

        c = self.campaign
        d = duals.denom
        if not d > 0:
            raise ValueError("degenerate duals")
        shift = -c.cpc_lower * duals.q_l
        if duals.q_u > 0:
            shift += c.cpc_upper * duals.q_u
        theta = (self.wp * d - shift) / c.value_scale
        return ndtr((self.obj - theta) / self.bandwidth)

    def __call__(self, duals: DualVars) -> tuple:
        prob = self.win_prob(duals)
        return float(self.cost_w @ prob), float(self.click_w @ prob)
