"""Randomized property suites for the greedy gap, monotonicity, convergence and positivity."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .allocator import ReplayResponse, SmoothedResponse, TrafficSlice, replay
from .core import Campaign, DualVars, epsilon_c
from .harness.synth import SynthConfig, assumption1_check, synth_generate
from .lp import Constraint, brute_force_01, greedy_01, lp_optimal, verify_gap
from .solver import SolverConfig, _Counted, _p_floor, _pin_point, _solve_p, residuals, solve


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: int = 0
    skipped: int = 0
    seconds: float = 0.0
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failures == 0 and self.checked > 0

    def fail(self, msg: str):
        self.failures += 1
        if len(self.examples) < 5:
            self.examples.append(msg)


def random_slice(rng, n: int) -> TrafficSlice:
    u = rng.random(n)
    wp = 0.3 + 2.0 * u + 0.3 * rng.random(n)
    obj = 0.1 + u + 0.3 * rng.random(n)
    pctr = rng.uniform(0.2, 1.0, n)
    return TrafficSlice(np.zeros(n, dtype=int), pctr, wp, obj, (0, 0))


def random_instance(rng, n_max: int = 15) -> tuple:
    """Small slice plus a campaign; 30% budget-only, the rest with a CPC window and B > 2 C_u."""
    n = int(rng.integers(1, n_max + 1))
    sl = random_slice(rng, n)
    tot = sl.total_cost()
    if rng.random() < 0.3:
        return sl, Campaign(0, max(tot * rng.uniform(0.2, 1.2), 1.0))
    cu = rng.uniform(0.8, 2.5)
    cl = rng.uniform(0.0, 0.8) * cu
    budget = max(tot * rng.uniform(0.2, 1.2), 3.0 * cu)
    return sl, Campaign(0, budget, cu, cl)


def suite_greedy_gap(n: int = 1000, seed: int = 0, n_max: int = 15) -> tuple:
    """Greedy 0-1 value and CPC against the brute-force optimum, plus LP dominance.

    Returns (gap suite, LP-dominance suite).
    """
    t = time.perf_counter()
    rng = np.random.default_rng(seed)
    gap, dom = SuiteResult("greedy_gap"), SuiteResult("lp_dominance")
    for i in range(n):
        sl, c = random_instance(rng, n_max)
        bf = brute_force_01(sl, c)
        eps = epsilon_c(c, float(sl.wp.max())) if c.has_upper else 0.0
        g = greedy_01(sl, c, eps=0.0)
        gap.checked += 1
        if not verify_gap(g.stats, bf, sl, c, eps):
            gap.fail(f"instance {i}: greedy {g.value:.6g} cpc {g.stats.cpc:.6g} vs 0-1 "
                     f"optimum {bf:.6g}, eps {eps:.4g}, {c}")
        lp = lp_optimal(sl, c)
        if lp.infeasible_lower_bound:
            # no auction outcome meets C_l, the 0-1 optimum is over a different feasible set
            dom.skipped += 1
            continue
        dom.checked += 1
        if lp.value < bf - 1e-9 * max(1.0, bf):
            dom.fail(f"instance {i}: LP {lp.value:.12g} < 0-1 optimum {bf:.12g}")
        elif not lp.binding and abs(lp.value - bf) > 1e-9 * max(1.0, bf):
            dom.fail(f"instance {i}: nothing binds but LP {lp.value:.12g} != {bf:.12g}")
    gap.seconds = dom.seconds = time.perf_counter() - t
    return gap, dom


def suite_monotonicity(n: int = 100, n_grid: int = 20, seed: int = 0) -> SuiteResult:
    """Replay cost/clicks/value nonincreasing in p; cost - C*clicks at (P(q), q) nonincreasing in q."""
    t = time.perf_counter()
    rng = np.random.default_rng(seed)
    res = SuiteResult("monotonicity")
    cfg = SolverConfig()
    for i in range(n):
        sl = random_slice(rng, int(rng.integers(5, 200)))
        budget = sl.total_cost() * rng.uniform(0.2, 0.9)
        cu = rng.uniform(0.8, 2.0)
        c = Campaign(0, budget, cu, rng.uniform(0.1, 0.6) * cu)
        tol = 1e-9 * max(1.0, budget)
        for q in (0.0, rng.uniform(0.0, 1.0), -rng.uniform(0.0, 0.5)):
            p_lo = max(0.0, 1e-6 - q)
            grid = p_lo + np.sort(rng.uniform(0.0, 3.0, n_grid))
            stats = [replay(sl, DualVars.from_signed(p, q), c) for p in grid]
            for a, b in zip(stats, stats[1:]):
                res.checked += 1
                if b.cost > a.cost + tol or b.clicks > a.clicks + tol or b.value > a.value + tol:
                    res.fail(f"instance {i}: replay grew with p at q={q}")
        # exact response: the won set is bought fractionally at the breaking line
        resp = ReplayResponse.from_slice(sl, c, fractional=True)
        ev = _Counted(resp)
        p0 = _solve_p(ev, c, 0.0, cfg)[0]
        qmax = 4.0 * max(p0, 1e-3)
        x_pin = _pin_point(ev, c, cfg)
        for bound, qs in ((c.cpc_upper, np.linspace(0.0, qmax, n_grid)),
                          # the pin point itself has D at the floor, a degenerate limit
                          (c.cpc_lower, np.linspace(-(x_pin or 0.0), 0.0, n_grid + 1)[1:])):
            if len(set(qs)) < 2:
                continue
            g = []
            for q in qs:
                _, cost, clk, _ = _solve_p(ev, c, float(q), cfg)
                g.append(cost - bound * clk)
            for a, b in zip(g, g[1:]):
                res.checked += 1
                if b > a + tol:
                    res.fail(f"instance {i}: cost - {bound:.4g}*clicks grew with q")
    res.seconds = time.perf_counter() - t
    return res


def suite_convergence(n: int = 1000, seed: int = 0, cfg: SolverConfig = SolverConfig()) -> SuiteResult:
    """Solves on smoothed responses: squared residuals of active constraints <= (1e-6 B)^2."""
    t = time.perf_counter()
    rng = np.random.default_rng(seed)
    res = SuiteResult("convergence")
    cap = cfg.max_outer * cfg.max_inner
    for i in range(n):
        sl = random_slice(rng, int(rng.integers(10, 200)))
        tot = sl.total_cost()
        budget = tot * rng.uniform(0.1, 1.3)
        kind = rng.integers(0, 3)
        base = Campaign(0, budget)
        bw = rng.uniform(0.05, 0.3)
        r0 = solve(SmoothedResponse.from_slice(sl, base, bw), base, cfg=cfg)
        cpc0 = r0.cpc if r0.clicks > 0 else float(np.mean(sl.wp))
        if kind == 0:
            c = base
        elif kind == 1:
            c = Campaign(0, budget, cpc0 * rng.uniform(0.7, 1.2), 0.0)
        else:
            c = Campaign(0, budget, cpc0 * 3.0, cpc0 * rng.uniform(0.8, 1.1))
        resp = SmoothedResponse.from_slice(sl, c, bw)
        r = solve(resp, c, cfg=cfg)
        if r.infeasible_lower_bound:
            res.skipped += 1
            continue
        res.checked += 1
        tol2 = (1e-6 * budget) ** 2
        l_p, l_qu, l_ql = residuals(resp, c, r.duals)
        bad = []
        if r.duals.p > _p_floor(r.duals.q, cfg.dual_floor) and l_p > tol2:
            bad.append(f"L_p={l_p:.3g}")
        if r.duals.q_u > 0 and l_qu > tol2:
            bad.append(f"L_qu={l_qu:.3g}")
        if r.duals.q_l > 0 and l_ql > tol2:
            bad.append(f"L_ql={l_ql:.3g}")
        if r.evaluations > cap:
            bad.append(f"{r.evaluations} evaluations")
        if r.degraded:
            bad.append("degraded")
        if bad:
            res.fail(f"instance {i}: " + ", ".join(bad) + f" duals={r.duals}")
    res.seconds = time.perf_counter() - t
    return res


def suite_positivity(n: int = 100, seed: int = 0, n_impressions: int = 2000) -> SuiteResult:
    """Binding lower CPC bound on correlated traffic: p + q_u - q_l > 0 and no infeasibility flag."""
    t = time.perf_counter()
    rng = np.random.default_rng(seed)
    res = SuiteResult("positivity")
    for i in range(n):
        sl = synth_generate(SynthConfig(n_impressions=n_impressions, seed=seed * 100003 + i))
        budget = sl.total_cost() * rng.uniform(0.1, 0.5)
        base = Campaign(i, budget)
        resp = ReplayResponse.from_slice(sl, base)
        cpc0 = solve(resp, base).cpc
        top = _top_cpc(sl, budget)
        if not top > cpc0:
            res.skipped += 1
            continue
        cl = cpc0 + rng.uniform(0.2, 0.8) * (top - cpc0)
        c = Campaign(i, budget, 2.0 * top, cl)
        if not assumption1_check(sl, c):
            res.skipped += 1
            continue
        resp = ReplayResponse.from_slice(sl, c)
        r = solve(resp, c)
        res.checked += 1
        if r.infeasible_lower_bound or not r.duals.denom > 0 or not r.duals.q_l > 0:
            res.fail(f"campaign {i}: duals {r.duals} flags infeasible={r.infeasible_lower_bound}")
    res.seconds = time.perf_counter() - t
    return res


def _top_cpc(sl: TrafficSlice, budget: float) -> float:
    order = np.lexsort((-np.arange(len(sl)), -sl.obj))
    cs = np.cumsum(sl.cost_weight[order])
    ks = np.cumsum(sl.pctr[order])
    k = max(int(np.searchsorted(cs, budget, side="right")), 1)
    return float(cs[k - 1] / ks[k - 1])


def run_all(seed: int = 0, n_gap: int = 1000, n_mono: int = 100, n_grid: int = 20,
            n_conv: int = 1000, n_pos: int = 100) -> list:
    gap, dom = suite_greedy_gap(n_gap, seed)
    return [gap, dom, suite_monotonicity(n_mono, n_grid, seed), suite_convergence(n_conv, seed),
            suite_positivity(n_pos, seed)]
