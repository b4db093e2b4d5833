"""Step-by-step trace of one campaign under the re-solving controller and under PID.

Prints the duals and the running CPC every few steps, which shows the
re-solving controller holding the CPC inside its window while PID only
reacts after the window has been left.

    python demos/pacing_trace.py [--seed N] [--every K]
"""
import argparse

from bicb import PidConfig, bicb_controller, oracle_predictor, pid_controller, train_empirical
from bicb.harness.episode import run_episode
from bicb.harness.experiment import build_campaigns, validate_config
from bicb.harness.synth import SynthConfig, synth_generate


def trace(name, ep, every):
    c = ep.campaign
    print(f"\n{name}: budget {c.budget:.1f}, CPC window [{c.cpc_lower:.3f}, {c.cpc_upper:.3f}]")
    print(f"{'step':>4}{'p':>10}{'q_u':>9}{'q_l':>9}{'spent':>9}{'CPC':>8}")
    for t, acc in zip(ep.ticks, ep.cumulative()):
        if t.step % every and t.step != c.end_step:
            continue
        d = t.duals
        p, qu, ql = (d.p, d.q_u, d.q_l) if d is not None else (float("nan"),) * 3
        print(f"{t.step:>4}{p:>10.4f}{qu:>9.4f}{ql:>9.4f}{acc.cost / c.budget:>9.1%}"
              f"{acc.cpc:>8.3f}")
    f = ep.final
    print(f"final revenue {f.value:.2f}, CPC {f.cpc:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--every", type=int, default=6)
    args = ap.parse_args()

    sc = SynthConfig(seed=args.seed)
    train, test = synth_generate(sc, 0), synth_generate(sc, 1)
    # C_u at 90% of the budget-only CPC, so the upper bound has to bind
    cfg = validate_config({"setting": "bicb", "campaigns": {
        "count": 1, "cpc_upper_factor": [0.9, 0.9], "cpc_lower_factor": [0.6, 0.6]}})
    c = build_campaigns(train, cfg, args.seed, sc.n_steps)[0]

    alpha0 = float(train.wp.mean() / train.obj.mean())
    runs = [("BiCB (forecast from day 1)", bicb_controller(train_empirical([train]))),
            ("BiCB* (true day 2)", bicb_controller(oracle_predictor(test))),
            ("PID", pid_controller(PidConfig(alpha0=alpha0)))]
    for name, ctl in runs:
        trace(name, run_episode(c, ctl, test), args.every)


if __name__ == "__main__":
    main()
