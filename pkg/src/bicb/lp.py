"""Reference solutions: exact LP optimum, brute-force 0-1 optimum, greedy 0-1.

The LP is solved through its own dual structure: the dual solver fixes the
threshold line on the true traffic, everything strictly above the line is
bought, and a handful of impressions next to the line receive fractional
amounts so the binding constraints hold with equality.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .allocator import ReplayResponse, TrafficSlice
from .core import AccumStats, Campaign, DualVars, epsilon_c, to_bid_params, wins_mask
from .solver import SolveResult, SolverConfig, solve

MAX_BRUTE_FORCE = 22


class Constraint(enum.Enum):
    BUDGET = "budget"
    CPC_UPPER = "cpc_upper"
    CPC_LOWER = "cpc_lower"


@dataclass
class LpSolution:
    value: float
    duals: DualVars
    fractional_items: list
    binding: set
    x: np.ndarray
    cost: float = 0.0
    clicks: float = 0.0
    infeasible_lower_bound: bool = False
    degraded: bool = False

    @property
    def cpc(self) -> float:
        return self.cost / self.clicks if self.clicks > 0 else 0.0

    def stats(self) -> AccumStats:
        return AccumStats(self.cost, self.clicks, self.value, int(np.count_nonzero(self.x)),
                          len(self.x))


def perturb_objs(sl: TrafficSlice) -> TrafficSlice:
    """Add ``i * 1e-12 * max(obj)`` to the i-th obj to break ties deterministically."""
    if len(sl) == 0:
        return sl
    base = 1e-12 * float(sl.obj.max())
    if base == 0.0:
        base = 1e-12
    return sl.with_obj(sl.obj + base * np.arange(len(sl)))


def _vertex_lp(c, a_rows, b_rows, tol):
    """Maximize c @ y over {A y <= b, 0 <= y <= 1} by enumerating vertices (few variables)."""
    k = len(c)
    if k == 0:
        return np.zeros(0)
    a = np.vstack([a_rows, np.eye(k), -np.eye(k)]) if len(a_rows) else np.vstack([np.eye(k), -np.eye(k)])
    b = np.concatenate([b_rows, np.ones(k), np.zeros(k)]) if len(b_rows) else np.concatenate([np.ones(k), np.zeros(k)])
    best, best_y = -np.inf, None
    for rows in itertools.combinations(range(len(a)), k):
        m = a[list(rows)]
        if abs(np.linalg.det(m)) < 1e-14:
            continue
        y = np.linalg.solve(m, b[list(rows)])
        if np.all(a @ y <= b + tol):
            val = c @ y
            if val > best + 1e-15:
                best, best_y = val, y
    return None if best_y is None else np.clip(best_y, 0.0, 1.0)


def lp_optimal(sl: TrafficSlice, campaign: Campaign, cfg: SolverConfig = SolverConfig(),
               n_candidates: int = 2) -> LpSolution:
    """Optimum of the LP relaxation on the full slice.

    Value is reported as sum(x * pctr * obj), without the constant C_u factor.
    """
    if len(sl) == 0:
        return LpSolution(0.0, DualVars(cfg.dual_floor), [], set(), np.zeros(0))
    pert = perturb_objs(sl)
    resp = ReplayResponse.from_slice(pert, campaign, fractional=True)
    res = solve(resp, campaign, cfg=cfg)
    params = to_bid_params(res.duals, campaign)
    won = wins_mask(params, pert.obj, pert.wp)
    x = won.astype(float)

    # impressions nearest the threshold line on either side
    margin = (params.alpha * pert.obj + params.beta - sl.wp) / sl.wp
    won_idx = np.flatnonzero(won)
    lost_idx = np.flatnonzero(~won)
    cand = []
    if won_idx.size:
        cand.extend(won_idx[np.argsort(margin[won_idx], kind="stable")[:n_candidates]])
    if lost_idx.size:
        cand.extend(lost_idx[np.argsort(-margin[lost_idx], kind="stable")[:n_candidates]])
    cand = np.array(sorted(set(int(i) for i in cand)), dtype=int)

    cw, kw, vw = sl.cost_weight, sl.pctr, sl.value_weight
    base = x.copy()
    base[cand] = 0.0
    b_cost, b_clk = float(cw @ base), float(kw @ base)
    scale = max(campaign.budget, float(cw.sum()), 1.0)
    rows, rhs = [], []
    rows.append(cw[cand])
    rhs.append(campaign.budget - b_cost)
    if campaign.has_upper:
        rows.append(cw[cand] - campaign.cpc_upper * kw[cand])
        rhs.append(campaign.cpc_upper * b_clk - b_cost)
    if campaign.has_lower:
        rows.append(-(cw[cand] - campaign.cpc_lower * kw[cand]))
        rhs.append(b_cost - campaign.cpc_lower * b_clk)
    y = _vertex_lp(vw[cand], np.array(rows), np.array(rhs), 1e-12 * scale)
    if y is not None:
        x[cand] = np.clip(y, 0.0, 1.0) + 0.0

    cost, clicks, value = float(cw @ x), float(kw @ x), float(vw @ x)
    frac = [(int(i), float(x[i])) for i in cand if 1e-12 < x[i] < 1.0 - 1e-12]
    binding = set()
    tol = 1e-9 * scale
    if cost >= campaign.budget - tol:
        binding.add(Constraint.BUDGET)
    # linear form cost - C * clicks, which is tight at the empty selection too
    if campaign.has_upper and abs(cost - campaign.cpc_upper * clicks) <= tol:
        binding.add(Constraint.CPC_UPPER)
    if campaign.has_lower and abs(cost - campaign.cpc_lower * clicks) <= tol:
        binding.add(Constraint.CPC_LOWER)
    return LpSolution(value, res.duals, frac, binding, x, cost, clicks,
                      res.infeasible_lower_bound, res.degraded)


def _feasible(cost, clk, campaign: Campaign, rel=1e-12):
    ok = cost <= campaign.budget * (1 + rel) + rel
    if campaign.has_upper:
        ok &= cost <= campaign.cpc_upper * clk * (1 + rel) + rel
    if campaign.has_lower:
        ok &= cost >= campaign.cpc_lower * clk * (1 - rel) - rel
    return ok


def brute_force_01(sl: TrafficSlice, campaign: Campaign) -> float:
    """Best sum(x * pctr * obj) over x in {0,1}^N meeting budget and CPC window."""
    n = len(sl)
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force limited to N <= {MAX_BRUTE_FORCE}, got {n}")
    if n == 0:
        return 0.0
    low = min(n, 16)
    bits = ((np.arange(1 << low)[:, None] >> np.arange(low)) & 1).astype(float)
    cw, kw, vw = sl.cost_weight, sl.pctr, sl.value_weight
    lc, lk, lv = bits @ cw[:low], bits @ kw[:low], bits @ vw[:low]
    best = 0.0
    for hi in range(1 << (n - low)):
        hbits = np.array([(hi >> j) & 1 for j in range(n - low)], dtype=float)
        hc, hk, hv = hbits @ cw[low:], hbits @ kw[low:], hbits @ vw[low:]
        cost, clk, val = lc + hc, lk + hk, lv + hv
        ok = _feasible(cost, clk, campaign)
        if ok.any():
            best = max(best, float(val[ok].max()))
    return best


@dataclass
class GreedyResult:
    stats: AccumStats
    duals: DualVars
    won: np.ndarray
    eps: float
    solve: Optional[SolveResult] = None

    @property
    def value(self) -> float:
        return self.stats.value


def greedy_01(sl: TrafficSlice, campaign: Campaign, eps: Optional[float] = None,
              cfg: SolverConfig = SolverConfig()) -> GreedyResult:
    """Greedy 0-1 allocation: LP duals for CPC bounds tightened by ``eps``, then strict threshold.

    ``eps`` defaults to :func:`epsilon_c` of the campaign.
    """
    if eps is None:
        eps = (epsilon_c(campaign, float(sl.wp.max()) if len(sl) else 0.0)
               if (campaign.has_upper or campaign.has_lower) else 0.0)
    tight = tightened(campaign, eps)
    if len(sl) == 0:
        return GreedyResult(AccumStats(), DualVars(cfg.dual_floor), np.zeros(0, bool), eps)
    pert = perturb_objs(sl)
    res = solve(ReplayResponse.from_slice(pert, tight, fractional=True), tight, cfg=cfg)
    won = wins_mask(to_bid_params(res.duals, tight), pert.obj, pert.wp)
    stats = AccumStats(float(sl.cost_weight @ won), float(sl.pctr @ won),
                       float(sl.value_weight @ won), int(won.sum()), len(sl))
    return GreedyResult(stats, res.duals, won, eps, res)


def verify_gap(greedy: AccumStats, lp01_value: float, sl: TrafficSlice, campaign: Campaign,
               eps: float, tol: float = 1e-9) -> bool:
    """Value within 2 * max(obj) of the 0-1 optimum and CPC inside [C_l - eps, C_u + eps]."""
    max_obj = float(sl.obj.max()) if len(sl) else 0.0
    if greedy.value < lp01_value - 2.0 * max_obj - tol:
        return False
    if greedy.clicks > 0:
        cpc = greedy.cost / greedy.clicks
        if cpc > campaign.cpc_upper + eps + tol or cpc < campaign.cpc_lower - eps - tol:
            return False
    return True


def tightened(campaign: Campaign, eps: float) -> Campaign:
    """Campaign with each active CPC bound moved inward by ``eps``."""
    cu = campaign.cpc_upper - eps if campaign.has_upper else campaign.cpc_upper
    cl = campaign.cpc_lower + eps if campaign.has_lower else 0.0
    if campaign.has_upper and not cu > cl:
        raise ValueError(f"tightening by {eps} empties the CPC window [{cl}, {cu}]")
    return campaign.with_bounds(cu, cl)


def relaxed(campaign: Campaign, eps: float) -> Campaign:
    """Campaign with CPC bounds widened by ``eps`` (lower bound clipped at 0)."""
    return campaign.with_bounds(campaign.cpc_upper + eps, campaign.cpc_lower - eps)
