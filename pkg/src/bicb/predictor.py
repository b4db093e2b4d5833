"""Remaining-horizon forecasts of cost and clicks as functions of the duals.

The built-in models replay stored impressions through the bidding rule:
the oracle replays the true future, the empirical model averages replays
over historical periods.  Both hand the solver a :class:`ReplayResponse`
so the dual search runs on exact step functions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .allocator import ReplayResponse, TrafficSlice
from .core import AccumStats, Campaign, DualVars, to_bid_params, wins_mask

LOG_HEADER = ["campaign_id", "step", "p", "q_u", "q_l", "cost", "clicks"]


@dataclass(frozen=True)
class CampaignFeatures:
    category: str = ""
    budget_band: int = 0
    elapsed: float = 0.0

    @classmethod
    def of(cls, campaign: Campaign, step: int, category: str = "") -> "CampaignFeatures":
        band = int(math.floor(math.log10(campaign.budget))) if campaign.budget > 0 else 0
        elapsed = (step - campaign.start_step) / campaign.n_steps
        return cls(category, band, min(max(elapsed, 0.0), 1.0))


class PredictorModel:
    """Bucket-level forecast C(t, features, duals), K(t, features, duals)."""

    periods: tuple = ()
    calibration: float = 1.0

    def predict_bucket(self, campaign: Campaign, step: int, duals: DualVars,
                       features: Optional[CampaignFeatures] = None) -> tuple:
        raise NotImplementedError

    def response(self, campaign: Campaign, t0: int, acc: AccumStats):
        """Callable duals -> (COST, CLK) over steps t0..end_step, including ``acc``."""
        model = self

        def resp(duals):
            return predict_remaining(model, campaign, t0, duals, acc)

        return resp


class ReplayModel(PredictorModel):
    """Weighted replay of stored impressions.

    Every stored impression carries weight ``calibration / n_periods``, so a
    bucket forecast is the calibrated mean over periods of that bucket's
    replay.
    """

    def __init__(self, history: Sequence[TrafficSlice], calibration: float = 1.0,
                 periods: Sequence = (), kind: str = "empirical"):
        history = list(history)
        if not history:
            raise ValueError("empirical model needs at least one historical period")
        if not calibration >= 0:
            raise ValueError("calibration must be nonnegative")
        self.kind = kind
        self.calibration = float(calibration)
        self.periods = tuple(periods) if periods else tuple(range(len(history)))
        self.n_periods = len(history)
        self.traffic = TrafficSlice.concat(history)
        self.weight = self.calibration / self.n_periods

    def _bucket(self, t0: int, t1: int) -> TrafficSlice:
        return self.traffic.steps(t0, t1)

    def predict_bucket(self, campaign, step, duals, features=None):
        sl = self._bucket(step, step)
        if len(sl) == 0:
            return 0.0, 0.0
        won = wins_mask(to_bid_params(duals, campaign), sl.obj, sl.wp)
        return (self.weight * float(sl.cost_weight @ won),
                self.weight * float(sl.pctr @ won))

    def predict_range(self, campaign, t0, t1, duals) -> tuple:
        sl = self._bucket(t0, t1)
        if len(sl) == 0:
            return 0.0, 0.0
        won = wins_mask(to_bid_params(duals, campaign), sl.obj, sl.wp)
        return (self.weight * float(sl.cost_weight @ won),
                self.weight * float(sl.pctr @ won))

    def response(self, campaign, t0, acc):
        sl = self._bucket(max(t0, campaign.start_step), campaign.end_step)
        return ReplayResponse(campaign, sl.pctr, sl.wp, sl.obj,
                              np.full(len(sl), self.weight), base=acc)

    def __repr__(self):
        return (f"ReplayModel(kind={self.kind}, periods={self.periods}, "
                f"calibration={self.calibration}, n={len(self.traffic)})")


def oracle_predictor(future: TrafficSlice) -> ReplayModel:
    """Perfect forecast: replays the traffic that will actually arrive."""
    return ReplayModel([future], 1.0, ("future",), kind="oracle")


def train_empirical(history: Sequence[TrafficSlice], calibration: float = 1.0,
                    periods: Sequence = ()) -> ReplayModel:
    if not history:
        raise ValueError("empirical model needs at least one historical period")
    return ReplayModel(history, calibration, periods)


def predict_remaining(model: PredictorModel, campaign: Campaign, t0: int, duals: DualVars,
                      acc: AccumStats) -> tuple:
    """(acc.cost + future bucket costs, acc.clicks + future bucket clicks) over t0..end."""
    t0 = max(t0, campaign.start_step)
    if t0 > campaign.end_step:
        return acc.cost, acc.clicks
    if isinstance(model, ReplayModel):
        c, k = model.predict_range(campaign, t0, campaign.end_step, duals)
        return acc.cost + c, acc.clicks + k
    cost, clk = acc.cost, acc.clicks
    for t in range(t0, campaign.end_step + 1):
        c, k = model.predict_bucket(campaign, t, duals)
        cost += c
        clk += k
    return cost, clk


@dataclass(frozen=True)
class ControlLogRecord:
    campaign_id: str
    step: int
    p: float
    q_u: float
    q_l: float
    cost: float
    clicks: float

    def __post_init__(self):
        if not (self.cost >= 0 and self.clicks >= 0):
            raise ValueError(f"realized cost/clicks must be nonnegative: {self}")

    @property
    def duals(self) -> DualVars:
        return DualVars(self.p, self.q_u, self.q_l)

    def row(self) -> list:
        return [self.campaign_id, self.step] + [repr(float(x)) for x in
                                                (self.p, self.q_u, self.q_l, self.cost, self.clicks)]


def write_logs(path, records: Iterable[ControlLogRecord]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in records:
            w.writerow(r.row())


def read_logs(path) -> list:
    """Control-log records from a CSV whose header contains the log columns.

    Extra columns are ignored, so episode files written by the harness
    can be read directly.
    """
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        missing = [h for h in LOG_HEADER if header is None or h not in header]
        if missing:
            raise ValueError(f"{path}:1: missing columns {','.join(missing)}")
        pos = [header.index(h) for h in LOG_HEADER]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            vals = [row[i] for i in pos]
            try:
                out.append(ControlLogRecord(vals[0], int(vals[1]), *map(float, vals[2:])))
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return out


def ingest_logs(records: Iterable[ControlLogRecord]) -> dict:
    """Group records into per-campaign trajectories sorted by step.

    Exact duplicates are dropped; two different records for the same
    (campaign, step) raise.
    """
    seen = {}
    for r in records:
        key = (r.campaign_id, r.step)
        if key in seen:
            if seen[key] != r:
                raise ValueError(f"conflicting log records for campaign {r.campaign_id} "
                                 f"step {r.step}")
            continue
        seen[key] = r
    out = {}
    for (cid, _), r in sorted(seen.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        out.setdefault(cid, []).append(r)
    return out


def calibration_from_logs(dataset: dict, model: PredictorModel, campaigns: dict) -> float:
    """Ratio of realized to predicted spend over logged buckets, 1.0 when nothing to compare."""
    realized = predicted = 0.0
    for cid, traj in dataset.items():
        campaign = campaigns.get(cid)
        if campaign is None:
            continue
        for r in traj:
            if not r.duals.denom > 0:
                continue
            c, _ = model.predict_bucket(campaign, r.step, r.duals)
            realized += r.cost
            predicted += c
    if predicted <= 0:
        return 1.0
    return model.calibration * realized / predicted


__all__ = [
    "CampaignFeatures", "ControlLogRecord", "LOG_HEADER", "PredictorModel", "ReplayModel",
    "calibration_from_logs", "ingest_logs", "oracle_predictor", "predict_remaining",
    "read_logs", "train_empirical", "write_logs",
]
