import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from bicb.allocator import TrafficSlice
from bicb.core import Campaign, epsilon_c
from bicb.harness.synth import SynthConfig, synth_generate
from bicb.lp import (Constraint, brute_force_01, greedy_01, lp_optimal, perturb_objs, relaxed,
                     tightened, verify_gap)
from bicb.verify import random_instance

from conftest import make_slice


def linprog_value(sl, c):
    """Independent LP optimum: max v.x s.t. cost <= B, CPC window as linear rows, 0 <= x <= 1."""
    a, b = [sl.cost_weight], [c.budget]
    if c.has_upper:
        a.append(sl.pctr * (sl.wp - c.cpc_upper))
        b.append(0.0)
    if c.has_lower:
        a.append(sl.pctr * (c.cpc_lower - sl.wp))
        b.append(0.0)
    r = linprog(-sl.value_weight, A_ub=np.array(a), b_ub=np.array(b), bounds=(0, 1),
                method="highs")
    assert r.status == 0
    return -r.fun


def subsets_value(sl, c):
    best = 0.0
    for k in range(1, len(sl) + 1):
        for s in itertools.combinations(range(len(sl)), k):
            s = list(s)
            cost, clk = sl.cost_weight[s].sum(), sl.pctr[s].sum()
            if cost > c.budget or cost > c.cpc_upper * clk or cost < c.cpc_lower * clk:
                continue
            best = max(best, sl.value_weight[s].sum())
    return best


def test_perturb_keeps_distinct_order():
    sl = make_slice([(1, 1, 0.3), (1, 1, 0.9), (1, 1, 0.6)])
    assert np.argsort(perturb_objs(sl).obj).tolist() == np.argsort(sl.obj).tolist()


def test_perturb_breaks_ties_toward_higher_index():
    p = perturb_objs(make_slice([(1, 1, 0.5), (1, 1, 0.5)]))
    assert p.obj[1] > p.obj[0]
    assert p.obj[1] - p.obj[0] == pytest.approx(1e-12 * 0.5, rel=1e-3)


def test_perturb_empty():
    assert len(perturb_objs(TrafficSlice.empty())) == 0


def test_lp_budget_fractional(three_items):
    sol = lp_optimal(three_items, Campaign(0, 2.5))
    assert sol.value == pytest.approx(1.65)
    assert sol.x.tolist() == pytest.approx([1, 1, 0.5])
    assert sol.fractional_items == [(2, pytest.approx(0.5))]
    assert sol.binding == {Constraint.BUDGET}
    assert sol.value == pytest.approx(linprog_value(three_items, Campaign(0, 2.5)))


def test_lp_unconstrained_takes_everything(three_items):
    sol = lp_optimal(three_items, Campaign(0, 10.0, 5.0, 0.1))
    assert sol.x.tolist() == [1, 1, 1] and sol.value == pytest.approx(1.8)
    assert sol.binding == set()


def test_lp_matches_linprog_on_a_day():
    sl = synth_generate(SynthConfig(n_impressions=5000, seed=11))
    tot = sl.total_cost()
    base = lp_optimal(sl, Campaign(0, 0.25 * tot))
    for c in (Campaign(0, 0.25 * tot), Campaign(0, 0.25 * tot, 0.95 * base.cpc, 0.0),
              Campaign(0, 0.25 * tot, 3 * base.cpc, 1.1 * base.cpc)):
        sol = lp_optimal(sl, c)
        assert sol.value == pytest.approx(linprog_value(sl, c), rel=1e-6)
        assert len(sol.fractional_items) <= 2
        assert sol.cost <= c.budget * (1 + 1e-9)
        if sol.clicks > 0:
            assert c.cpc_lower * (1 - 1e-9) <= sol.cpc <= c.cpc_upper * (1 + 1e-9)


def test_lp_matches_linprog_random_small():
    rng = np.random.default_rng(3)
    for _ in range(200):
        sl, c = random_instance(rng, 12)
        sol = lp_optimal(sl, c)
        if sol.infeasible_lower_bound:
            continue
        assert sol.value == pytest.approx(linprog_value(sl, c), rel=1e-7, abs=1e-9)


def test_brute_force_examples():
    assert brute_force_01(TrafficSlice.empty(), Campaign(0, 1.0)) == 0.0
    assert brute_force_01(make_slice([(1, 2, 1.0), (1, 1, 0.9)]), Campaign(0, 2.0)) == 1.0
    sl = make_slice([(1, 3, 0.1), (1, 0.5, 0.9)])
    assert brute_force_01(sl, Campaign(0, 10.0, 5.0, 1.0)) == pytest.approx(1.0)


def test_brute_force_matches_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(50):
        sl, c = random_instance(rng, 9)
        assert brute_force_01(sl, c) == pytest.approx(subsets_value(sl, c), abs=1e-12)


def test_brute_force_size_limit():
    sl = make_slice([(1, 1, 0.5)] * 23)
    with pytest.raises(ValueError):
        brute_force_01(sl, Campaign(0, 1.0))


def test_verify_gap_equal_values(three_items):
    g = greedy_01(three_items, Campaign(0, 2.0))
    assert verify_gap(g.stats, g.value, three_items, Campaign(0, 2.0), 0.0)


def test_verify_gap_rejects_large_gap(three_items):
    g = greedy_01(three_items, Campaign(0, 2.0))
    assert not verify_gap(g.stats, g.value + 2 * 0.9 + 0.01, three_items, Campaign(0, 2.0), 0.0)


def test_worked_setting_two_percent():
    sl = synth_generate(SynthConfig(seed=0))
    sl = sl.with_obj(np.minimum(sl.obj, 1.0))
    c = Campaign(0, 300.0, 2.0, 1.2)
    lp, g = lp_optimal(sl, c), greedy_01(sl, c)
    assert g.eps == pytest.approx(epsilon_c(c, float(sl.wp.max())))
    assert lp.value >= 100
    assert 2 * sl.obj.max() / lp.value <= 0.02
    assert (lp.value - g.value) / lp.value <= 0.02
    assert c.cpc_lower <= g.stats.cpc <= c.cpc_upper


def test_lp_invariants_on_random_instances():
    rng = np.random.default_rng(21)
    for _ in range(200):
        sl, c = random_instance(rng, 12)
        sol = lp_optimal(sl, c)
        if sol.infeasible_lower_bound:
            continue
        # a dual is positive only if its constraint binds
        if sol.duals.q_u > 0:
            assert Constraint.CPC_UPPER in sol.binding
        if sol.duals.q_l > 0:
            assert Constraint.CPC_LOWER in sol.binding
        assert np.all((sol.x >= 0) & (sol.x <= 1))
        # dropping fractional items gives a 0-1 point inside the relaxed window
        x = np.floor(sol.x)
        cost, clk = float(sl.cost_weight @ x), float(sl.pctr @ x)
        assert cost <= c.budget * (1 + 1e-9)
        g = greedy_01(sl, c, eps=0.0)
        assert sol.value - g.value <= 2 * sl.obj.max() + 1e-9
        if clk > 0 and c.budget > 2 * c.cpc_upper:
            eps = epsilon_c(c, float(sl.wp.max()))
            assert c.cpc_lower - eps - 1e-9 <= cost / clk <= c.cpc_upper + eps + 1e-9


def test_tightened_and_relaxed():
    c = Campaign(0, 100.0, 2.0, 1.0)
    t = tightened(c, 0.1)
    assert (t.cpc_upper, t.cpc_lower) == (pytest.approx(1.9), pytest.approx(1.1))
    r = relaxed(c, 0.1)
    assert (r.cpc_upper, r.cpc_lower) == (pytest.approx(2.1), pytest.approx(0.9))
    assert relaxed(c, 5.0).cpc_lower == 0.0
    assert math.isinf(tightened(Campaign(0, 10.0), 0.5).cpc_upper)
    with pytest.raises(ValueError):
        tightened(c, 0.6)
