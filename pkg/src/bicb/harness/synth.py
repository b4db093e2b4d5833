"""Synthetic impression streams with value and price driven by a shared latent quality."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..allocator import TrafficSlice
from ..core import Campaign


@dataclass(frozen=True)
class SynthConfig:
    n_impressions: int = 10000
    n_steps: int = 48
    seed: int = 0
    # wp = wp_base + a*u + noise_w*N(0,1), floored at wp_min
    a: float = 2.0
    wp_base: float = 0.3
    noise_w: float = 0.25
    wp_min: float = 0.05
    # obj = max(0, obj_base + b*u + noise_o*N(0,1)), times the step quality factor
    b: float = 1.0
    obj_base: float = 0.1
    noise_o: float = 0.15
    # pctr ~ Beta(pctr_a, pctr_b), clipped to [pctr_min, 1]
    pctr_a: float = 2.0
    pctr_b: float = 8.0
    pctr_min: float = 1e-4
    volume: str = "diurnal"  # or "uniform"
    volume_amp: float = 0.5
    quality_amp: float = 0.2

    def __post_init__(self):
        if self.n_impressions < 0:
            raise ValueError("n_impressions must be >= 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.volume not in ("diurnal", "uniform"):
            raise ValueError(f"unknown volume profile {self.volume!r}")
        if not (0 <= self.volume_amp < 1 and 0 <= self.quality_amp < 1):
            raise ValueError("amplitudes must lie in [0, 1)")


def volume_profile(cfg: SynthConfig) -> np.ndarray:
    t = (np.arange(cfg.n_steps) + 0.5) / cfg.n_steps
    if cfg.volume == "uniform":
        w = np.ones(cfg.n_steps)
    else:
        w = 1.0 + cfg.volume_amp * np.sin(2 * np.pi * (t - 0.3))
    return w / w.sum()


def step_quality(cfg: SynthConfig) -> np.ndarray:
    t = (np.arange(cfg.n_steps) + 0.5) / cfg.n_steps
    return 1.0 + cfg.quality_amp * np.cos(2 * np.pi * (t - 0.6))


def synth_generate(cfg: SynthConfig, period: int = 0) -> TrafficSlice:
    """Deterministic in (cfg.seed, period)."""
    rng = np.random.default_rng([cfg.seed, period])
    n = cfg.n_impressions
    steps = np.sort(rng.choice(cfg.n_steps, size=n, p=volume_profile(cfg)))
    u = rng.random(n)
    wp = np.maximum(cfg.wp_base + cfg.a * u + cfg.noise_w * rng.standard_normal(n), cfg.wp_min)
    obj = np.maximum(cfg.obj_base + cfg.b * u + cfg.noise_o * rng.standard_normal(n), 0.0)
    obj = obj * step_quality(cfg)[steps]
    pctr = np.clip(rng.beta(cfg.pctr_a, cfg.pctr_b, n), cfg.pctr_min, 1.0)
    return TrafficSlice(steps, pctr, wp, obj, (0, cfg.n_steps - 1))


def synth_days(cfg: SynthConfig, n_days: int = 2) -> list:
    return [synth_generate(cfg, d) for d in range(n_days)]


def assumption1_check(sl: TrafficSlice, campaign: Campaign) -> bool:
    """Whether the highest-obj impressions that exhaust the budget have CPC above C_l.

    Impressions are ranked by obj (ties broken by index, later first) and the
    longest prefix with cost <= B is taken, at least one impression.  If all
    traffic fits the budget the whole-traffic CPC is used.
    """
    if len(sl) == 0:
        return campaign.cpc_lower <= 0.0
    order = np.lexsort((-np.arange(len(sl)), -sl.obj))
    cs = np.cumsum(sl.cost_weight[order])
    ks = np.cumsum(sl.pctr[order])
    k = max(int(np.searchsorted(cs, campaign.budget, side="right")), 1)
    cost, clk = cs[k - 1], ks[k - 1]
    if clk <= 0:
        return campaign.cpc_lower <= 0.0
    return bool(cost / clk > campaign.cpc_lower)
