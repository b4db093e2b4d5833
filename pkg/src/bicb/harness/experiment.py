"""Experiment runner: build campaigns, run every method on a train/test day pair, report.

Configs are TOML files, for example::

    setting = "bicb"
    methods = ["manual", "pid", "online_lp", "bicb", "bicb_star", "offline_lp"]
    seeds = [0, 1]

    [traffic]
    source = "synthetic"
    n_steps = 48
    [traffic.synth]
    n_impressions = 10000

    [campaigns]
    count = 5
    budget_fraction = [0.1, 0.4]
"""
from __future__ import annotations

import copy
import csv
import os
import sys
from dataclasses import dataclass, field, fields

import jsonschema
import numpy as np

from ..allocator import TrafficSlice
from ..controllers import (LoopGains, PidConfig, bicb_controller, manual_controller,
                           online_lp_controller, pid_controller)
from ..core import Campaign
from ..lp import lp_optimal
from ..predictor import oracle_predictor, train_empirical, write_logs
from ..solver import SolverConfig
from .data import load_traffic
from .episode import EpisodeResult, run_episode, write_episode
from .metrics import MetricsReport, compute_metrics
from .synth import SynthConfig, synth_generate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("manual", "pid", "online_lp", "bicb", "bicb_star", "offline_lp")
SETTINGS = ("bcb", "bicb")
REPORT_HEADER = ["method", "setting", "revenue", "cost", "br", "r_over_rstar", "ocr", "g"]
CAMPAIGN_HEADER = ["campaign_id", "budget", "cpc_upper", "cpc_lower", "start_step", "end_step",
                   "manual_bid"]

_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_synth_props = {f.name: {"type": "string" if f.name == "volume" else
                         "integer" if f.type in ("int", int) else "number"}
                for f in fields(SynthConfig) if f.name != "seed"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "setting": {"enum": list(SETTINGS) + [s.upper() for s in SETTINGS]},
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1,
                    "uniqueItems": True},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "lambda": {"type": "number", "exclusiveMinimum": 1},
        "traffic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"enum": ["synthetic", "csv"]},
                "path": {"type": "string"},
                "train_period": {"type": "string"},
                "test_period": {"type": "string"},
                "n_steps": {"type": "integer", "minimum": 1},
                "synth": {"type": "object", "additionalProperties": False,
                          "properties": _synth_props},
            },
        },
        "campaigns": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "budget_fraction": _range,
                "cpc_upper_factor": _range,
                "cpc_lower_factor": _range,
                "manual_bid_factor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "pid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in
                           ("kp", "ki", "kd", "cpc_kp", "cpc_ki", "cpc_kd", "window")},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"big_m": {"type": "number"}, "eps_bracket": {"type": "number"},
                           "max_outer": {"type": "integer"}, "max_inner": {"type": "integer"},
                           "dual_floor": {"type": "number"}},
        },
        "predictor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"calibration": {"type": "number", "minimum": 0}},
        },
    },
}

DEFAULTS = {
    "setting": "bicb",
    "methods": list(METHODS),
    "seeds": [0],
    "lambda": 100.0,
    "traffic": {"source": "synthetic", "n_steps": 48, "synth": {}},
    "campaigns": {"count": 5, "budget_fraction": [0.1, 0.4], "cpc_upper_factor": [0.85, 1.15],
                  "cpc_lower_factor": [0.6, 1.1], "manual_bid_factor": 1.0},
    "pid": {"kp": 0.6, "ki": 0.05, "kd": 0.0, "cpc_kp": 0.6, "cpc_ki": 0.05, "cpc_kd": 0.0,
            "window": 3},
    "solver": {},
    "predictor": {"calibration": 1.0},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(raw: dict) -> dict:
    """Check ``raw`` against the schema and fill in defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}") from None
    cfg = _merge(DEFAULTS, raw)
    cfg["setting"] = cfg["setting"].lower()
    tr = cfg["traffic"]
    if tr["source"] == "csv" and "path" not in tr:
        raise ConfigError("config error at traffic: csv source needs a path")
    for key in ("budget_fraction", "cpc_upper_factor", "cpc_lower_factor"):
        lo, hi = cfg["campaigns"][key]
        if not 0 < lo <= hi:
            raise ConfigError(f"config error at campaigns/{key}: need 0 < low <= high")
    if cfg["pid"]["window"] < 1:
        raise ConfigError("config error at pid/window: must be >= 1")
    try:
        SynthConfig(n_steps=tr["n_steps"], **tr["synth"])
        SolverConfig(**cfg["solver"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config error: {e}") from None
    return cfg


def load_config(path) -> dict:
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return validate_config(raw)


def day_pair(cfg: dict, seed: int, _cache: dict = None) -> tuple:
    """(train, test) traffic for one seed."""
    tr = cfg["traffic"]
    if tr["source"] == "synthetic":
        sc = SynthConfig(n_steps=tr["n_steps"], seed=seed, **tr["synth"])
        return synth_generate(sc, 0), synth_generate(sc, 1)
    periods = _cache if _cache is not None else load_traffic(tr["path"], tr["n_steps"])
    by_id = dict(periods)
    ids = [pid for pid, _ in periods]
    train_id = tr.get("train_period", ids[0])
    test_id = tr.get("test_period", ids[1] if len(ids) > 1 else ids[0])
    for pid in (train_id, test_id):
        if pid not in by_id:
            raise ConfigError(f"period {pid!r} not found in {tr['path']}")
    return by_id[train_id], by_id[test_id]


def build_campaigns(train: TrafficSlice, cfg: dict, seed: int, n_steps: int) -> list:
    """Campaigns sized from the training day.

    Budget is a fraction of the day's total cost.  In the bicb setting the
    CPC bounds are factors of the CPC that the budget-only optimum attains
    on the training day.
    """
    cc = cfg["campaigns"]
    rng = np.random.default_rng([seed, 1])
    total = train.total_cost()
    out = []
    for k in range(cc["count"]):
        frac = rng.uniform(*cc["budget_fraction"])
        fu = rng.uniform(*cc["cpc_upper_factor"])
        fl = rng.uniform(*cc["cpc_lower_factor"])
        budget = max(frac * total, 1e-9)
        base = Campaign(f"c{k}", budget, end_step=n_steps - 1)
        ref = lp_optimal(train, base)
        cpc_ref = ref.cpc if ref.clicks > 0 else float(np.mean(train.wp))
        manual = cc["manual_bid_factor"] * cpc_ref
        if cfg["setting"] == "bcb":
            out.append(Campaign(f"c{k}", budget, end_step=n_steps - 1, manual_bid=manual))
            continue
        fl = min(fl, fu - 0.1)
        out.append(Campaign(f"c{k}", budget, fu * cpc_ref, max(fl, 0.0) * cpc_ref,
                            end_step=n_steps - 1, manual_bid=manual))
    return out


def _pid_cfg(cfg: dict, train: TrafficSlice) -> PidConfig:
    pc = cfg["pid"]
    # start from the price-to-value ratio of the training day
    alpha0 = float(train.wp.mean() / max(train.obj.mean(), 1e-12)) if len(train) else 1.0
    return PidConfig(LoopGains(pc["kp"], pc["ki"], pc["kd"]),
                     LoopGains(pc["cpc_kp"], pc["cpc_ki"], pc["cpc_kd"]),
                     window=int(pc["window"]), alpha0=min(max(alpha0, 1e-3), 1e3))


@dataclass
class SeedRun:
    seed: int
    campaigns: list
    reports: dict = field(default_factory=dict)      # method -> MetricsReport
    episodes: dict = field(default_factory=dict)     # method -> [EpisodeResult]
    flags: dict = field(default_factory=dict)        # method -> {campaign id: flags}


@dataclass
class ExperimentResult:
    setting: str
    methods: list
    runs: list
    rows: list  # (method, MetricsReport averaged over seeds)


def run_seed(cfg: dict, seed: int, train: TrafficSlice, test: TrafficSlice) -> SeedRun:
    n_steps = cfg["traffic"]["n_steps"]
    solver_cfg = SolverConfig(**cfg["solver"])
    campaigns = build_campaigns(train, cfg, seed, n_steps)
    by_id = {c.id: c for c in campaigns}
    refs = {c.id: lp_optimal(test, c, solver_cfg) for c in campaigns}
    run = SeedRun(seed, campaigns)
    empirical = oracle = None
    for method in cfg["methods"]:
        finals, eps, flags = {}, [], {}
        for c in campaigns:
            if method == "offline_lp":
                sol = refs[c.id]
                finals[c.id] = sol.stats()
                flags[c.id] = {"degraded": sol.degraded,
                               "infeasible_lower_bound": sol.infeasible_lower_bound}
                continue
            if method == "manual":
                ctl = manual_controller(c.manual_bid)
            elif method == "pid":
                ctl = pid_controller(_pid_cfg(cfg, train))
            elif method == "online_lp":
                ctl = online_lp_controller(train, c, solver_cfg)
            elif method == "bicb":
                if empirical is None:
                    empirical = train_empirical([train], cfg["predictor"]["calibration"])
                ctl = bicb_controller(empirical, solver_cfg)
            elif method == "bicb_star":
                if oracle is None:
                    oracle = oracle_predictor(test)
                ctl = bicb_controller(oracle, solver_cfg)
            else:
                raise ConfigError(f"unknown method {method!r}")
            ep = run_episode(c, ctl, test)
            eps.append(ep)
            finals[c.id] = ep.final
            flags[c.id] = ep.flags
        run.reports[method] = compute_metrics(finals, refs, by_id, cfg["lambda"])
        run.episodes[method] = eps
        run.flags[method] = flags
    return run


def _mean_report(reports: list) -> MetricsReport:
    n = len(reports)
    keys = ("revenue", "cost", "budget", "br", "r_over_rstar", "ocr", "g")
    vals = {k: sum(getattr(r, k) for r in reports) / n for k in keys}
    rows = [row for r in reports for row in r.per_campaign]
    return MetricsReport(per_campaign=rows, **vals)


def run_experiment(config) -> ExperimentResult:
    """``config`` is a path to a TOML file or an already-parsed dict."""
    cfg = load_config(config) if isinstance(config, (str, os.PathLike)) else validate_config(config)
    cache = None
    if cfg["traffic"]["source"] == "csv":
        cache = load_traffic(cfg["traffic"]["path"], cfg["traffic"]["n_steps"])
        if not cache:
            raise ConfigError(f"{cfg['traffic']['path']}: no traffic rows")
    runs = []
    for seed in cfg["seeds"]:
        train, test = day_pair(cfg, seed, cache)
        runs.append(run_seed(cfg, seed, train, test))
    rows = [(m, _mean_report([r.reports[m] for r in runs])) for m in cfg["methods"]]
    return ExperimentResult(cfg["setting"], list(cfg["methods"]), runs, rows)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def report_lines(result: ExperimentResult) -> list:
    lines = [",".join(REPORT_HEADER)]
    for method, r in result.rows:
        lines.append(",".join([method, result.setting] + [_fmt(v) for v in (
            r.revenue, r.cost, r.br, r.r_over_rstar, r.ocr, r.g)]))
    return lines


def write_report(path, result: ExperimentResult):
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("\n".join(report_lines(result)) + "\n")


def write_episodes(out_dir, result: ExperimentResult) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for run in result.runs:
        for method, eps in run.episodes.items():
            if not eps:
                continue
            path = os.path.join(out_dir, f"{method}_{result.setting}_seed{run.seed}.csv")
            write_episode(path, eps)
            paths.append(path)
    return paths


def write_campaigns(path, campaigns):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CAMPAIGN_HEADER)
        for c in campaigns:
            w.writerow([c.id, repr(float(c.budget)), repr(float(c.cpc_upper)),
                        repr(float(c.cpc_lower)), c.start_step, c.end_step,
                        "" if c.manual_bid is None else repr(float(c.manual_bid))])


def read_campaigns(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        if next(reader, None) != CAMPAIGN_HEADER:
            raise ConfigError(f"{path}:1: expected header {','.join(CAMPAIGN_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                cid, b, cu, cl, t0, t1, mb = row
                out[cid] = Campaign(cid, float(b), float(cu), float(cl), int(t0), int(t1),
                                    float(mb) if mb else None)
            except ValueError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from None
    return out


def write_logs_dir(out_dir, result: ExperimentResult) -> list:
    """Control logs (one file per method and seed) plus the campaigns of each seed."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for run in result.runs:
        path = os.path.join(out_dir, f"campaigns_{result.setting}_seed{run.seed}.csv")
        write_campaigns(path, run.campaigns)
        paths.append(path)
        for method, eps in run.episodes.items():
            if not eps:
                continue
            path = os.path.join(out_dir, f"{method}_{result.setting}_seed{run.seed}.csv")
            write_logs(path, [r for ep in eps for r in ep.log_records()])
            paths.append(path)
    return paths
