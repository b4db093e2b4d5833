"""One auction slice, one campaign: LP optimum, greedy 0-1 buy and the bid line.

Budget 300, CPC window [1.2, 2], prices up to 3 and values up to 1.  The
greedy buy is the LP solution with the fractional impressions dropped, so
it can trail the LP by at most 2 * max(obj).

    python demos/worked_setting.py [--seed N]
"""
import argparse

import numpy as np

from bicb import Campaign, TrafficSlice, epsilon_c, greedy_01, lp_optimal, to_bid_params


def make_slice(rng, n=3000):
    u = rng.random(n)
    wp = np.clip(0.2 + 2.6 * u + 0.3 * rng.standard_normal(n), 0.05, 3.0)
    obj = np.clip(0.1 + 0.8 * u + 0.1 * rng.standard_normal(n), 0.0, 1.0)
    pctr = rng.beta(4.0, 6.0, n)
    return TrafficSlice(np.zeros(n, dtype=int), pctr, wp, obj, (0, 0))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sl = make_slice(np.random.default_rng(args.seed))
    c = Campaign("demo", 300.0, 2.0, 1.2)
    print(f"{len(sl)} impressions, total cost {sl.total_cost():.1f}, max wp {sl.wp.max():.3f}")

    lp = lp_optimal(sl, c)
    d = lp.duals
    bp = to_bid_params(d, c)
    print(f"\nLP optimum     value {lp.value:9.3f}  cost {lp.cost:8.3f}  CPC {lp.cpc:.4f}")
    print(f"  duals        p={d.p:.6g} q_u={d.q_u:.6g} q_l={d.q_l:.6g}")
    print(f"  bid line     bid = {bp.alpha:.6g} * obj + {bp.beta:.6g}")
    print(f"  binding      {sorted(b.value for b in lp.binding)}")
    print(f"  fractional   {len(lp.fractional_items)} impression(s)")

    eps = epsilon_c(c, float(sl.wp.max()))
    g = greedy_01(sl, c)
    s = g.stats
    print(f"\ngreedy 0-1     value {s.value:9.3f}  cost {s.cost:8.3f}  CPC {s.cpc:.4f}")
    print(f"  bounds tightened by eps_c = {eps:.6f}")
    gap = lp.value - s.value
    print(f"  gap to LP    {gap:.4f} ({gap / lp.value:.2%}), allowed {2 * sl.obj.max():.4f}")
    inside = c.cpc_lower - eps <= s.cpc <= c.cpc_upper + eps
    print(f"  CPC inside [C_l - eps, C_u + eps]: {inside}")


if __name__ == "__main__":
    main()
