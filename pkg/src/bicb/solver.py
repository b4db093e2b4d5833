"""Nested bisection for the dual variables (p, q_u, q_l).

The CPC multipliers are folded into one signed variable ``q``
(``q_u = max(q, 0)``, ``q_l = max(-q, 0)``).  For fixed ``q`` the inner loop
finds P(q), the smallest budget multiplier whose cost fits the budget; the
outer loop bisects ``q`` on the sign of ``cost - C * clicks`` evaluated at
(P(q), q), which is nonincreasing in ``q``.

Discrete responses are step functions, so bisection stops either on a
small residual or once the bracket has collapsed, and always returns the
constraint-satisfying end of the bracket.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .core import Campaign, DualVars

log = logging.getLogger(__name__)


class ResponseFn(Protocol):
    def __call__(self, duals: DualVars) -> tuple: ...


class BracketError(RuntimeError):
    """cost(M, q) still exceeds the budget: the bracket bound M is too small."""


@dataclass(frozen=True)
class SolverConfig:
    big_m: float = 1e6
    eps_residual: Optional[float] = None  # defaults to 1e-6 * B
    eps_bracket: float = 1e-10
    max_outer: int = 64
    max_inner: int = 64
    dual_floor: float = 1e-9

    def __post_init__(self):
        if not self.big_m > 0:
            raise ValueError("big_m must be positive")
        if self.eps_residual is not None and not self.eps_residual > 0:
            raise ValueError("eps_residual must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if not self.dual_floor > 0:
            raise ValueError("dual_floor must be positive")

    def residual_tol(self, budget: float) -> float:
        return self.eps_residual if self.eps_residual is not None else 1e-6 * budget


@dataclass
class SolveResult:
    duals: DualVars
    cost: float
    clicks: float
    evaluations: int = 0
    degraded: bool = False
    infeasible_lower_bound: bool = False
    warm_accepted: bool = False
    outer_iterations: int = 0
    notes: list = field(default_factory=list)

    @property
    def cpc(self) -> float:
        return self.cost / self.clicks if self.clicks > 0 else 0.0


class _Counted:
    def __init__(self, resp: ResponseFn):
        self.resp = resp
        self.n = 0

    def __call__(self, p: float, q: float) -> tuple:
        self.n += 1
        return self.resp(DualVars.from_signed(p, q))


def residuals(resp: ResponseFn, campaign: Campaign, duals: DualVars) -> tuple:
    """Squared residuals (L_p, L_qu, L_ql) of the budget and CPC equations.

    An absent CPC bound has residual 0.
    """
    cost, clk = resp(duals)
    l_p = (campaign.budget - cost) ** 2
    l_qu = (campaign.cpc_upper * clk - cost) ** 2 if campaign.has_upper else 0.0
    l_ql = (campaign.cpc_lower * clk - cost) ** 2
    return l_p, l_qu, l_ql


def _p_floor(q: float, floor: float) -> float:
    # keeps D = p + q >= floor
    return max(0.0, floor - q)


def _width_ok(lo: float, hi: float, eps: float) -> bool:
    return hi - lo <= eps * (1.0 + abs(hi))


def _solve_p(ev: _Counted, campaign: Campaign, q: float, cfg: SolverConfig,
             guess: Optional[float] = None) -> tuple:
    """Return (P(q), cost, clicks, converged)."""
    budget = campaign.budget
    tol = cfg.residual_tol(budget)
    lo = _p_floor(q, cfg.dual_floor)
    # the bid depends on p relative to q, so the bracket grows with |q|
    p_max = cfg.big_m * (1.0 + abs(q))
    fast = getattr(ev.resp, "p_of_q", None)
    if fast is not None:
        ev.n += 1
        p, cost, clk = fast(q, budget, lo)
        if not p <= p_max:
            raise BracketError(f"cost at p={p_max:g} exceeds budget (q={q})")
        return p, cost, clk, True
    cost, clk = ev(lo, q)
    if cost <= budget:
        return lo, cost, clk, True
    hi = p_max
    c_hi, k_hi = ev(hi, q)
    if c_hi > budget:
        raise BracketError(f"cost at p={p_max:g} exceeds budget (q={q})")
    if guess is not None and lo < guess < hi:
        lo, hi, c_hi, k_hi = _narrow(lambda x: ev(x, q), lambda r: r[0] <= budget,
                                     lo, hi, c_hi, k_hi, guess)
    for _ in range(cfg.max_inner):
        if budget - c_hi <= tol or _width_ok(lo, hi, cfg.eps_bracket):
            return hi, c_hi, k_hi, True
        mid = 0.5 * (lo + hi)
        c, k = ev(mid, q)
        if c <= budget:
            hi, c_hi, k_hi = mid, c, k
        else:
            lo = mid
    converged = budget - c_hi <= tol or _width_ok(lo, hi, cfg.eps_bracket)
    return hi, c_hi, k_hi, converged


def _narrow(f, sat, lo, hi, c_hi, k_hi, guess, max_steps=8):
    """Shrink a [lo (unsat), hi (sat)] bracket around ``guess`` by geometric probing.

    Monotone setting: points above the root are satisfying.
    """
    r = f(guess)
    step = max(abs(guess) * 1e-4, 1e-12)
    if sat(r):
        hi, (c_hi, k_hi) = guess, r
        for _ in range(max_steps):
            x = guess - step
            if x <= lo:
                break
            rx = f(x)
            if sat(rx):
                hi, (c_hi, k_hi) = x, rx
                step *= 8.0
            else:
                lo = x
                break
    else:
        lo = guess
        for _ in range(max_steps):
            x = guess + step
            if x >= hi:
                break
            rx = f(x)
            if sat(rx):
                hi, (c_hi, k_hi) = x, rx
                break
            lo = x
            step *= 8.0
    return lo, hi, c_hi, k_hi


def solve_p_given_q(resp: ResponseFn, campaign: Campaign, q: float,
                    cfg: SolverConfig = SolverConfig()) -> float:
    """P(q): 0 (or the dual floor) when the budget is slack, else the smallest p with cost <= B."""
    p, _, _, _ = _solve_p(_Counted(resp), campaign, q, cfg)
    return p


def _cpc_state(cost: float, clk: float, campaign: Campaign) -> int:
    """+1 above C_u, -1 below C_l, 0 inside the window (or no clicks)."""
    if clk <= 0.0:
        return 0
    if campaign.has_upper and cost > campaign.cpc_upper * clk:
        return 1
    if campaign.has_lower and cost < campaign.cpc_lower * clk:
        return -1
    return 0


def _accept_warm(ev: _Counted, campaign: Campaign, w: DualVars, cfg: SolverConfig):
    """Check whether warm-start duals still satisfy the optimality system."""
    budget = campaign.budget
    tol = cfg.residual_tol(budget)
    if not w.denom >= cfg.dual_floor * (1 - 1e-9):
        return None
    q = w.q
    cost, clk = ev(w.p, q)
    if cost > budget:
        return None
    p_lo = _p_floor(q, cfg.dual_floor)
    dp = 2.0 * cfg.eps_bracket * (1.0 + abs(w.p)) + 1e-15
    if not (w.p <= p_lo + dp or budget - cost <= tol):
        if ev(max(w.p - dp, p_lo), q)[0] <= budget:
            # not the left edge; still fine if P(q) sits on the same plateau (same won set)
            _, c0, k0, _ = _solve_p(ev, campaign, q, cfg)
            scale = 1e-12 * max(1.0, budget)
            if abs(c0 - cost) > scale or abs(k0 - clk) > scale:
                return None
    dq = 2.0 * cfg.eps_bracket * (1.0 + abs(q)) + 1e-15
    if q == 0.0:
        if _cpc_state(cost, clk, campaign) != 0:
            return None
    elif q > 0.0:
        g = cost - campaign.cpc_upper * clk
        if g > 0.0 or (campaign.has_lower and clk > 0 and cost < campaign.cpc_lower * clk):
            return None
        if abs(g) > tol:
            q2 = max(q - dq, 0.0)
            p2, c2, k2, _ = _solve_p(ev, campaign, q2, cfg)
            if c2 - campaign.cpc_upper * k2 <= 0.0:
                return None
    else:
        g = cost - campaign.cpc_lower * clk
        if g < 0.0 or (campaign.has_upper and cost > campaign.cpc_upper * clk):
            return None
        if abs(g) > tol:
            q2 = min(q + dq, 0.0)
            p2, c2, k2, _ = _solve_p(ev, campaign, q2, cfg)
            if c2 - campaign.cpc_lower * k2 >= 0.0:
                return None
    return cost, clk


def solve(resp: ResponseFn, campaign: Campaign, warm_start: Optional[DualVars] = None,
          cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Find duals satisfying the complementary-slackness system on ``resp``.

    If ``warm_start`` still satisfies the system it is returned unchanged,
    which keeps the bid stable when the forecast is borne out.
    """
    ev = _Counted(resp)
    budget = campaign.budget
    tol = cfg.residual_tol(budget)

    if warm_start is not None:
        ok = _accept_warm(ev, campaign, warm_start, cfg)
        if ok is not None:
            return SolveResult(warm_start, ok[0], ok[1], ev.n, warm_accepted=True)

    guess_p = warm_start.p if warm_start is not None else None
    p0, c0, k0, conv0 = _solve_p(ev, campaign, 0.0, cfg, guess_p)
    state = _cpc_state(c0, k0, campaign)
    if state == 0:
        return SolveResult(DualVars.from_signed(p0, 0.0), c0, k0, ev.n, degraded=not conv0)

    cpc_bound = campaign.cpc_upper if state > 0 else campaign.cpc_lower

    def g_at(q, guess=None):
        p, c, k, conv = _solve_p(ev, campaign, q, cfg, guess)
        return p, c, k, conv, c - cpc_bound * k

    # search in x = sign * q so that x=0 is unsatisfied and large x satisfies
    sign = 1.0 if state > 0 else -1.0

    def sat(g):
        return g <= 0.0 if state > 0 else g >= 0.0

    notes = []
    lo, hi = 0.0, cfg.big_m
    if state < 0:
        # beyond x_pin, P(q) sits on the dual floor and the lower-bound
        # residual is no longer monotone; the root must lie in [0, x_pin]
        hi = _pin_point(ev, campaign, cfg)
        if hi is None:
            notes.append("no budget-feasible point on the dual floor inside [-M, 0]")
            return SolveResult(DualVars.from_signed(p0, 0.0), c0, k0, ev.n, degraded=True,
                               notes=notes)
    guess = sign * warm_start.q if warm_start is not None else None
    rhi = None
    if state > 0 and not (guess is not None and 0.0 < guess < hi):
        # expand geometrically from the scale of P(0) before falling back to M
        x = max(p0, 1e-6)
        while x < hi:
            r = g_at(x)
            if sat(r[4]):
                hi, rhi = x, r
                break
            lo = x
            x *= 8.0
    if rhi is None:
        rhi = g_at(sign * hi)
    if not sat(rhi[4]):
        p, cost, clk = rhi[0], rhi[1], rhi[2]
        duals = DualVars.from_signed(p, sign * hi)
        if state < 0:
            notes.append("lower CPC bound needs p + q_u - q_l <= 0")
            return SolveResult(duals, cost, clk, ev.n, infeasible_lower_bound=True, notes=notes)
        notes.append("CPC upper bound cannot be met inside [0, M]")
        return SolveResult(duals, cost, clk, ev.n, degraded=True, notes=notes)

    if guess is not None and lo < guess < hi:
        lo, hi, rhi = _narrow_outer(g_at, sat, sign, lo, hi, rhi, guess, warm_start.p)
    outer = 0
    degraded = False
    while True:
        if (abs(rhi[4]) <= tol and rhi[2] > 0) or _width_ok(lo, hi, cfg.eps_bracket):
            break
        if outer >= cfg.max_outer:
            degraded = True
            notes.append("outer bisection cap reached")
            break
        outer += 1
        mid = 0.5 * (lo + hi)
        r = g_at(sign * mid, rhi[0])
        if sat(r[4]):
            hi, rhi = mid, r
        else:
            lo = mid
    p, cost, clk, conv, _ = rhi
    degraded = degraded or not conv
    if degraded:
        log.debug("solve degraded for campaign %s: %s", campaign.id, notes)
    return SolveResult(DualVars.from_signed(p, sign * hi), cost, clk, ev.n, degraded=degraded,
                       outer_iterations=outer, notes=notes)


def _pin_point(ev: _Counted, campaign: Campaign, cfg: SolverConfig) -> Optional[float]:
    """Smallest q_l >= 0 at which the budget fits with p + q_u - q_l on the dual floor."""
    budget = campaign.budget

    def fits(x):
        return ev(_p_floor(-x, cfg.dual_floor), -x)[0] <= budget

    if fits(0.0):
        return 0.0
    lo, hi = 0.0, cfg.big_m
    if not fits(hi):
        return None
    for _ in range(cfg.max_inner):
        if _width_ok(lo, hi, cfg.eps_bracket):
            break
        mid = 0.5 * (lo + hi)
        if fits(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _narrow_outer(g_at, sat, sign, lo, hi, rhi, guess, p_guess, max_steps=8):
    r = g_at(sign * guess, p_guess)
    step = max(guess * 1e-4, 1e-12)
    if sat(r[4]):
        hi, rhi = guess, r
        for _ in range(max_steps):
            x = guess - step
            if x <= lo:
                break
            rx = g_at(sign * x, rhi[0])
            if sat(rx[4]):
                hi, rhi = x, rx
                step *= 8.0
            else:
                lo = x
                break
    else:
        lo = guess
        for _ in range(max_steps):
            x = guess + step
            if x >= hi:
                break
            rx = g_at(sign * x, r[0])
            if sat(rx[4]):
                hi, rhi = x, rx
                break
            lo = x
            step *= 8.0
    return lo, hi, rhi


def complementary_slackness(resp: ResponseFn, campaign: Campaign, duals: DualVars) -> tuple:
    """Products p*(cost-B), q_u*(cost-C_u*clk), q_l*(cost-C_l*clk)."""
    cost, clk = resp(duals)
    a = duals.p * (cost - campaign.budget)
    b = duals.q_u * (cost - campaign.cpc_upper * clk) if duals.q_u > 0 else 0.0
    c = duals.q_l * (cost - campaign.cpc_lower * clk) if duals.q_l > 0 else 0.0
    return a, b, c
