"""Step-by-step execution of one campaign under one controller."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..allocator import TrafficSlice, budget_stop_mask
from ..controllers import Controller
from ..core import AccumStats, BidParams, Campaign, DualVars, wins_mask
from ..predictor import ControlLogRecord

EPISODE_HEADER = ["campaign_id", "step", "p", "q_u", "q_l", "alpha", "beta",
                  "cost", "clicks", "value"]


@dataclass
class TickRecord:
    step: int
    params: BidParams
    duals: Optional[DualVars]
    delta: AccumStats


@dataclass
class EpisodeResult:
    campaign: Campaign
    ticks: list = field(default_factory=list)
    final: AccumStats = field(default_factory=AccumStats)
    flags: dict = field(default_factory=dict)

    @property
    def trajectory(self) -> list:
        return [t.delta for t in self.ticks]

    def cumulative(self) -> list:
        acc, out = AccumStats(), []
        for t in self.ticks:
            acc = acc + t.delta
            out.append(acc)
        return out

    def log_records(self) -> list:
        out = []
        for t in self.ticks:
            d = t.duals
            p, qu, ql = (d.p, d.q_u, d.q_l) if d is not None else (math.nan,) * 3
            out.append(ControlLogRecord(str(self.campaign.id), t.step, p, qu, ql,
                                        t.delta.cost, t.delta.clicks))
        return out

    def rows(self) -> list:
        rows = []
        for t in self.ticks:
            d = t.duals
            p, qu, ql = (d.p, d.q_u, d.q_l) if d is not None else (math.nan,) * 3
            rows.append([str(self.campaign.id), t.step] + [
                repr(float(x)) for x in (p, qu, ql, t.params.alpha, t.params.beta,
                                         t.delta.cost, t.delta.clicks, t.delta.value)])
        return rows


def run_episode(campaign: Campaign, controller: Controller, sl: TrafficSlice) -> EpisodeResult:
    """Tick the controller at each step start, then buy that step's traffic under a hard budget."""
    res = EpisodeResult(campaign)
    acc = AccumStats()
    for step in range(campaign.start_step, campaign.end_step + 1):
        params = controller.on_tick(campaign, step, acc.copy())
        a, b = sl.index_range(step, step)
        delta = AccumStats(seen=b - a)
        remaining = campaign.budget - acc.cost
        if b > a and remaining > 0:
            won = np.flatnonzero(wins_mask(params, sl.obj[a:b], sl.wp[a:b])) + a
            cw = sl.cost_weight[won]
            won = won[budget_stop_mask(cw, remaining)]
            delta = AccumStats(float(sl.cost_weight[won].sum()), float(sl.pctr[won].sum()),
                               float(sl.value_weight[won].sum()), len(won), b - a)
        acc += delta
        res.ticks.append(TickRecord(step, params, controller.duals, delta))
    res.final = acc
    res.flags = controller.flags
    return res


def write_episode(path, results):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EPISODE_HEADER)
        for r in results:
            w.writerows(r.rows())
