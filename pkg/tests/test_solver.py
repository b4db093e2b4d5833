import itertools

import numpy as np
import pytest

from bicb.allocator import ReplayResponse, SmoothedResponse, replay
from bicb.core import Campaign, DualVars
from bicb.harness.synth import SynthConfig, synth_generate
from bicb.solver import (BracketError, SolverConfig, complementary_slackness, residuals, solve,
                         solve_p_given_q)

from conftest import make_slice

CFG = SolverConfig()


def const_response(cost, clicks):
    return lambda duals: (cost, clicks)


def test_p_zero_when_budget_slack():
    c = Campaign(0, 10.0)
    p = solve_p_given_q(const_response(5.0, 3.0), c, 0.0)
    # p = 0 is represented by the dual floor so the bid stays finite
    assert p <= CFG.dual_floor


def test_p_selects_top_two(three_items):
    c = Campaign(0, 2.0, 1.0)
    p = solve_p_given_q(ReplayResponse.from_slice(three_items, c), c, 0.0)
    st = replay(three_items, DualVars(p), c)
    assert st.cost == 2.0 and st.value == pytest.approx(1.5)
    # brute force over thresholds: the best affordable prefix by obj is the top two
    best = max(sum(o for o in s) for k in range(4)
               for s in itertools.combinations((0.9, 0.6, 0.3), k) if len(s) <= 2)
    assert st.value == pytest.approx(best)


def test_p_same_on_generic_callable(three_items):
    c = Campaign(0, 2.0, 1.0)
    resp = ReplayResponse.from_slice(three_items, c)
    p_fast = solve_p_given_q(resp, c, 0.0)
    p_slow = solve_p_given_q(lambda d: resp(d), c, 0.0)
    # both land on the plateau with cost exactly B, so the won sets agree
    assert replay(three_items, DualVars(p_slow), c) == replay(three_items, DualVars(p_fast), c)
    assert replay(three_items, DualVars(p_slow), c).cost == 2.0


def test_p_floor_when_budget_exceeds_traffic(three_items):
    c = Campaign(0, 100.0, 1.0)
    assert solve_p_given_q(ReplayResponse.from_slice(three_items, c), c, 0.0) <= CFG.dual_floor


def test_bracket_failure():
    with pytest.raises(BracketError):
        solve_p_given_q(const_response(50.0, 1.0), Campaign(0, 10.0), 0.0)


def test_bcb_slack_wins_everything(three_items):
    c = Campaign(0, 1e9)
    r = solve(ReplayResponse.from_slice(three_items, c), c)
    assert r.duals.q_u == 0 and r.duals.q_l == 0 and r.duals.p <= CFG.dual_floor
    assert replay(three_items, r.duals, c).wins == 3


def test_upper_bound_binding(three_items):
    # every nonempty set has CPC 1.0 > 0.8, so only the empty set is feasible
    c = Campaign(0, 2.0, 0.8)
    r = solve(ReplayResponse.from_slice(three_items, c), c)
    assert r.duals.q_u > 0 and r.duals.q_l == 0
    st = replay(three_items, r.duals, c)
    assert st.clicks == 0 or st.cost / st.clicks <= 0.8 + 1e-9
    # grid over (p, q_u): no dual point wins a CPC-feasible nonempty set either
    for p, qu in itertools.product(np.linspace(0.01, 3, 30), np.linspace(0, 3, 30)):
        s = replay(three_items, DualVars(p, qu, 0), c)
        assert s.clicks == 0 or s.cost / s.clicks > 0.8


def test_upper_bound_binding_mixed_prices():
    sl = make_slice([(1, 0.5, 0.2), (1, 1.0, 0.5), (1, 2.0, 0.9), (1, 3.0, 1.0)])
    c = Campaign(0, 4.0, 1.0)
    r = solve(ReplayResponse.from_slice(sl, c), c)
    st = replay(sl, r.duals, c)
    assert r.duals.q_u > 0
    assert st.cost / st.clicks <= 1.0 + 1e-9 and st.cost <= 4.0


def test_lower_bound_binding_positive_denominator():
    sl = synth_generate(SynthConfig(n_impressions=4000, seed=3))
    budget = 0.2 * sl.total_cost()
    base = Campaign(0, budget)
    cpc0 = solve(ReplayResponse.from_slice(sl, base), base).cpc
    c = Campaign(0, budget, 3 * cpc0, 1.1 * cpc0)
    r = solve(ReplayResponse.from_slice(sl, c), c)
    assert r.duals.q_l > 0 and r.duals.q_u == 0 and r.duals.denom > 0
    assert not r.infeasible_lower_bound
    assert r.cpc >= 1.1 * cpc0 * (1 - 1e-6)


def test_infeasible_lower_bound_flagged():
    # all traffic together is cheaper than C_l
    sl = make_slice([(1, 0.5, 0.5), (1, 0.6, 0.4)])
    c = Campaign(0, 10.0, 3.0, 1.0)
    r = solve(ReplayResponse.from_slice(sl, c), c)
    assert r.infeasible_lower_bound
    assert r.duals.denom >= CFG.dual_floor * (1 - 1e-6)


def test_residual_arithmetic():
    c = Campaign(0, 150.0, 1.0, 0.5)
    assert residuals(const_response(150.0, 10.0), c, DualVars(1))[0] == 0.0
    assert residuals(const_response(100.0, 10.0), c, DualVars(1))[0] == 2500.0
    l_p, l_qu, l_ql = residuals(const_response(120.0, 100.0), c, DualVars(1))
    assert l_qu == 400.0 and l_ql == pytest.approx(70.0 ** 2)


def test_degraded_when_caps_exhausted():
    sl = synth_generate(SynthConfig(n_impressions=500, seed=0))
    c = Campaign(0, 0.3 * sl.total_cost())
    resp = SmoothedResponse.from_slice(sl, c, 0.2)
    r = solve(lambda d: resp(d), c, cfg=SolverConfig(max_inner=2, max_outer=2))
    assert r.degraded


def test_complementary_slackness_at_solution():
    sl = synth_generate(SynthConfig(n_impressions=3000, seed=5))
    budget = 0.25 * sl.total_cost()
    for cu, cl in ((np.inf, 0.0), (1.2, 0.0), (10.0, 1.4)):
        c = Campaign(0, budget, cu, cl)
        resp = SmoothedResponse.from_slice(sl, c, 0.1)
        r = solve(resp, c)
        cs = complementary_slackness(resp, c, r.duals)
        assert all(abs(x) <= 1e-6 * budget * max(1.0, v) for x, v in
                   zip(cs, (r.duals.p, r.duals.q_u, r.duals.q_l))), (cu, cl, cs, r.duals)
        assert r.evaluations <= CFG.max_outer * CFG.max_inner


def test_warm_start_keeps_decision_set():
    sl = synth_generate(SynthConfig(n_impressions=3000, seed=6))
    c = Campaign(0, 0.2 * sl.total_cost(), 2.0, 0.0)
    resp = ReplayResponse.from_slice(sl, c)
    cold = solve(resp, c)
    warm = solve(resp, c, warm_start=cold.duals)
    assert warm.warm_accepted and warm.duals == cold.duals
    # a nearby warm start lands on the same won set
    nudged = solve(resp, c, warm_start=DualVars(cold.duals.p * 1.01, cold.duals.q_u * 0.99, 0))
    v0 = replay(sl, cold.duals, c).value
    v1 = replay(sl, nudged.duals, c).value
    assert abs(v0 - v1) <= sl.value_weight.max() + 1e-12


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(big_m=0)
    with pytest.raises(ValueError):
        SolverConfig(max_inner=0)
    with pytest.raises(ValueError):
        SolverConfig(dual_floor=0)
