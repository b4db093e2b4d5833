import numpy as np
import pytest

from bicb.allocator import (ReplayMode, ReplayResponse, TrafficSlice, budget_stop_mask, replay,
                            replay_per_step, won_mask)
from bicb.core import AccumStats, Campaign, DualVars, Impression
from bicb.harness.synth import SynthConfig, synth_generate

from conftest import make_slice


def test_replay_example_first_wins_only():
    sl = make_slice([(1, 1, 0.6), (1, 1, 0.4)])
    st = replay(sl, DualVars(1), Campaign(0, 10, 2.0))
    assert (st.cost, st.clicks, st.value, st.wins) == (1.0, 1.0, pytest.approx(0.6), 1)


def test_tiny_p_wins_everything():
    sl = make_slice([(0.5, 3.0, 0.01), (0.2, 1.0, 0.1), (1.0, 2.0, 0.0)])
    st = replay(sl, DualVars(1e-12), Campaign(0, 1.0))
    # obj=0 has bid exactly 0 < wp, so it never wins
    assert st.wins == 2
    assert st.cost == pytest.approx(0.5 * 3 + 0.2 * 1)


def test_empty_slice():
    st = replay(TrafficSlice.empty(), DualVars(1), Campaign(0, 1.0))
    assert st == AccumStats()


def test_hard_budget_stop_skips_and_continues():
    sl = make_slice([(1, 1.0, 0.9), (1, 5.0, 0.9), (1, 0.5, 0.9)])
    st = replay(sl, DualVars(1e-6), Campaign(0, 2.0), ReplayMode.HARD_BUDGET_STOP)
    assert st.cost == 1.5 and st.wins == 2


def test_budget_stop_mask():
    assert budget_stop_mask(np.array([1.0, 5.0, 0.5, 0.6]), 2.0).tolist() == [True, False, True,
                                                                          False]
    assert budget_stop_mask(np.array([]), 1.0).tolist() == []
    assert not budget_stop_mask(np.array([3.0]), 2.0).any()


def test_replay_per_step_single_bucket():
    sl = make_slice([(1, 1, 0.6), (1, 1, 0.4)], step_range=(0, 0))
    d = replay_per_step(sl, DualVars(1), Campaign(0, 10, 2.0, end_step=0))
    assert d == [replay(sl, DualVars(1), Campaign(0, 10, 2.0))]


def test_replay_per_step_losing_step_is_zero():
    sl = make_slice([(1, 1, 0.9), (1, 1, 0.1)], steps=[0, 1], step_range=(0, 1))
    d = replay_per_step(sl, DualVars(1), Campaign(0, 10, 2.0, end_step=1))
    assert d[0].wins == 1 and d[1].cost == 0 and d[1].clicks == 0 and d[1].seen == 1


def test_replay_per_step_additive():
    sl = synth_generate(SynthConfig(n_impressions=3000, seed=4))
    c = Campaign(0, 100.0)
    d = replay_per_step(sl, DualVars(0.6), c)
    tot = replay(sl, DualVars(0.6), c)
    assert len(d) == 48
    assert sum(x.cost for x in d) == pytest.approx(tot.cost, rel=1e-9)
    assert sum(x.wins for x in d) == tot.wins


def test_from_impressions_sorts_by_step():
    sl = TrafficSlice.from_impressions([Impression(3, 0.1, 1.0, 0.2), Impression(1, 0.2, 1.0, 0.1)])
    assert sl.step.tolist() == [1, 3] and sl.pctr.tolist() == [0.2, 0.1]


def test_slice_validation():
    with pytest.raises(ValueError):
        TrafficSlice([0], [1.5], [1.0], [0.1])
    with pytest.raises(ValueError):
        TrafficSlice([5], [0.5], [1.0], [0.1], step_range=(0, 3))


def test_steps_and_concat():
    sl = make_slice([(1, 1, 0.1)] * 4, steps=[0, 1, 1, 3], step_range=(0, 3))
    assert len(sl.steps(1, 1)) == 2 and len(sl.steps(2, 2)) == 0
    both = TrafficSlice.concat([sl, sl])
    assert len(both) == 8 and both.step.tolist() == sorted(both.step.tolist())


def test_response_matches_replay():
    sl = synth_generate(SynthConfig(n_impressions=2000, seed=1))
    c = Campaign(0, 50.0, 3.0, 0.5)
    resp = ReplayResponse.from_slice(sl, c)
    for d in (DualVars(0.5), DualVars(0.4, 0.1, 0), DualVars(0.8, 0, 0.3)):
        st = replay(sl, d, c)
        cost, clk = resp(d)
        assert cost == pytest.approx(st.cost, rel=1e-12)
        assert clk == pytest.approx(st.clicks, rel=1e-12)


def test_p_of_q_is_left_edge_of_budget_step(three_items):
    c = Campaign(0, 2.0, 1.0)
    resp = ReplayResponse.from_slice(three_items, c)
    p, cost, clk = resp.p_of_q(0.0, 2.0, 1e-9)
    assert cost == 2.0 and clk == 2.0
    assert resp(DualVars(p * (1 - 1e-9)))[0] > 2.0


def test_fractional_p_of_q_fills_budget(three_items):
    c = Campaign(0, 2.5)
    resp = ReplayResponse.from_slice(three_items, c, fractional=True)
    _, cost, clk = resp.p_of_q(0.0, 2.5, 1e-9)
    assert cost == pytest.approx(2.5) and clk == pytest.approx(2.5)


def test_won_set_nested_in_p():
    sl = synth_generate(SynthConfig(n_impressions=2000, seed=2))
    c = Campaign(0, 50.0, 2.0, 0.5)
    prev = None
    for p in np.linspace(0.1, 2.0, 15):
        w = won_mask(sl, DualVars(p, 0.0, 0.05), c)
        if prev is not None:
            assert not np.any(w & ~prev)
        prev = w
