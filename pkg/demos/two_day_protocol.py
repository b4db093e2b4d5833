"""Train on day 1, bid on day 2: every method in both settings.

Campaign budgets and CPC windows are sized from the training day.  The
offline LP row is the hindsight optimum R* that the other rows are
measured against.

    python demos/two_day_protocol.py [--seeds 0 1 2] [--n 10000]
"""
import argparse

from bicb.harness.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--n", type=int, default=10000, help="impressions per day")
    ap.add_argument("--campaigns", type=int, default=5)
    args = ap.parse_args()

    for setting in ("bcb", "bicb"):
        res = run_experiment({"setting": setting, "seeds": args.seeds,
                              "campaigns": {"count": args.campaigns},
                              "traffic": {"synth": {"n_impressions": args.n}}})
        print(f"\n{setting} setting, seeds {args.seeds}")
        print(f"{'method':<11}{'revenue':>10}{'BR':>8}{'R/R*':>8}{'OCR':>7}{'G':>9}")
        for method, r in res.rows:
            print(f"{method:<11}{r.revenue:>10.1f}{r.br:>8.3f}{r.r_over_rstar:>8.4f}"
                  f"{r.ocr:>7.2f}{r.g:>9.3f}")

    # online LP replays yesterday's duals; when day 2 drifts its CPC drifts with it,
    # while the re-solving controllers track the window


if __name__ == "__main__":
    main()
