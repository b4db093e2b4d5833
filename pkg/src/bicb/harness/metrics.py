"""Evaluation metrics: budget rate, revenue ratio, constraint-violation rate and the G score."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..core import AccumStats, Campaign

# relative float slack when checking realized CPC against the exact bounds
CPC_RTOL = 1e-9


def excess_ratios(stats: AccumStats, campaign: Campaign, rtol: float = 0.0) -> tuple:
    """(upper, lower) excess: max(0, CPC/C_u - 1) and max(0, C_l/CPC - 1); zero without clicks.

    Excesses within ``rtol`` count as zero.
    """
    if stats.clicks <= 0:
        return 0.0, 0.0
    cpc = stats.cost / stats.clicks
    up = low = 0.0
    if campaign.has_upper:
        up = cpc / campaign.cpc_upper - 1.0
        up = up if up > rtol else 0.0
    if campaign.has_lower:
        low = campaign.cpc_lower / cpc - 1.0 if cpc > 0 else float("inf")
        low = low if low > rtol else 0.0
    return up, low


def penalty(exr: float, lam: float = 100.0) -> float:
    try:
        return lam ** exr - 1.0
    except OverflowError:
        # far outside the window: the score is unbounded below
        return float("inf")


def violates(stats: AccumStats, campaign: Campaign, rtol: float = CPC_RTOL) -> bool:
    up, low = excess_ratios(stats, campaign, rtol)
    return up > 0 or low > 0


@dataclass
class MetricsReport:
    revenue: float
    cost: float
    budget: float
    br: float
    r_over_rstar: float
    ocr: float
    g: float
    per_campaign: list = field(default_factory=list)


def compute_metrics(results: dict, lp_refs: dict, campaigns: dict, lam: float = 100.0,
                    rtol: float = CPC_RTOL) -> MetricsReport:
    """Aggregate per-campaign final stats into one report.

    ``results`` maps campaign id to final AccumStats (or anything with
    ``.final``), ``lp_refs`` maps campaign id to the optimum revenue R* (a
    number or an object with ``.value``).
    """
    if set(results) != set(lp_refs) or set(results) != set(campaigns):
        raise ValueError("results, references and campaigns must cover the same campaign ids")
    revenue = cost = budget = rstar = pen = 0.0
    n_bad = 0
    rows = []
    for cid in sorted(results, key=str):
        s = results[cid]
        s = getattr(s, "final", s)
        ref = lp_refs[cid]
        ref = float(getattr(ref, "value", ref))
        c = campaigns[cid]
        up, low = excess_ratios(s, c, rtol)
        p = 0.0
        if c.has_upper:
            p += penalty(up, lam)
        if c.has_lower:
            p += penalty(low, lam)
        bad = violates(s, c, rtol)
        n_bad += bad
        pen += p
        revenue += s.value
        cost += s.cost
        budget += c.budget
        rstar += ref
        rows.append({"campaign_id": cid, "revenue": s.value, "cost": s.cost,
                     "budget": c.budget, "r_star": ref, "cpc": s.cpc,
                     "violation": bad, "penalty": p})
    n = len(results)
    br = cost / budget if budget > 0 else 0.0
    ratio = revenue / rstar if rstar > 0 else 1.0
    ocr = n_bad / n if n else 0.0
    return MetricsReport(revenue, cost, budget, br, ratio, ocr, min(ratio, 1.0) - pen, rows)
