"""Command-line entry point: ``bicb {generate,simulate,train,verify,report}``."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
import time

import numpy as np

from .harness.data import TrafficFormatError, load_traffic, write_traffic
from .harness.episode import EPISODE_HEADER
from .harness.experiment import (METHODS, SETTINGS, ConfigError, read_campaigns, report_lines,
                                 run_experiment, validate_config, write_episodes,
                                 write_logs_dir, write_report)
from .harness.synth import SynthConfig, synth_generate
from .predictor import calibration_from_logs, ingest_logs, read_logs, train_empirical

PLOT_HEADER = ["step", "p", "q_u", "q_l", "alpha", "beta", "cum_cost", "cum_clicks", "cum_value"]
VERIFY_HEADER = ["suite", "checked", "failures", "skipped", "status"]


class CliError(Exception):
    pass


def resolve_seed(args) -> int | None:
    """--seed wins over BICB_SEED; None when neither is given."""
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BICB_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise CliError(f"BICB_SEED must be an integer, got {env!r}") from None


def _out(args, *parts) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, *parts)


def cmd_generate(args) -> int:
    seed = resolve_seed(args) or 0
    cfg = SynthConfig(n_impressions=args.n, n_steps=args.steps, seed=seed, volume=args.volume)
    periods = [(str(k), synth_generate(cfg, k)) for k in range(args.periods)]
    path = args.output or _out(args, "traffic.csv")
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    write_traffic(path, periods)
    print(f"wrote {path}: {args.periods} period(s) x {args.n} impressions, {args.steps} steps")
    for pid, sl in periods:
        if len(sl) == 0:
            print(f"  period {pid}: empty")
            continue
        print(f"  period {pid}: total cost {sl.total_cost():.6g}, mean wp {sl.wp.mean():.4f}, "
              f"mean obj {sl.obj.mean():.4f}, mean pctr {sl.pctr.mean():.4f}")
    return 0


def _sim_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            with open(args.config, "rb") as f:
                raw = tomllib.load(f)
        except OSError as e:
            raise CliError(f"cannot read config: {e}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from None
    if args.setting:
        raw["setting"] = args.setting
    if args.methods:
        raw["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    seed = resolve_seed(args)
    if seed is not None:
        raw["seeds"] = [seed]
    elif "seeds" not in raw:
        raw["seeds"] = [0]
    tr = raw.setdefault("traffic", {})
    if args.traffic:
        tr["source"] = "csv"
        tr["path"] = args.traffic
    if args.n is not None:
        tr.setdefault("synth", {})["n_impressions"] = args.n
    if args.steps is not None:
        tr["n_steps"] = args.steps
    if args.campaigns is not None:
        raw.setdefault("campaigns", {})["count"] = args.campaigns
    return validate_config(raw)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    t = time.perf_counter()
    result = run_experiment(cfg)
    report = _out(args, "report.csv")
    write_report(report, result)
    eps = write_episodes(_out(args, "episodes"), result)
    logs = write_logs_dir(_out(args, "logs"), result)
    print("\n".join(report_lines(result)))
    print(f"wrote {report}, {len(eps)} episode file(s), {len(logs)} log file(s) "
          f"in {time.perf_counter() - t:.1f}s", file=sys.stderr)
    for run in result.runs:
        for method, flags in run.flags.items():
            for cid, f in flags.items():
                bad = [k for k, v in f.items() if v]
                if bad:
                    print(f"seed {run.seed} {method} {cid}: {', '.join(bad)}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    seed = resolve_seed(args) or 0
    if args.traffic:
        periods = load_traffic(args.traffic, args.steps)
        if args.periods:
            want = [p.strip() for p in args.periods.split(",")]
            have = dict(periods)
            missing = [p for p in want if p not in have]
            if missing:
                raise CliError(f"periods not in {args.traffic}: {', '.join(missing)}")
            periods = [(p, have[p]) for p in want]
    else:
        cfg = SynthConfig(n_impressions=args.n, n_steps=args.steps, seed=seed)
        periods = [(str(k), synth_generate(cfg, k)) for k in range(args.days)]
    if not periods:
        raise CliError("no historical periods to train on")
    model = train_empirical([sl for _, sl in periods], args.calibration, [p for p, _ in periods])
    summary = {"kind": model.kind, "periods": list(model.periods),
               "n_impressions": len(model.traffic), "calibration": model.calibration}
    if args.logs:
        records = []
        for path in args.logs:
            records.extend(read_logs(path))
        dataset = ingest_logs(records)
        summary["log_campaigns"] = len(dataset)
        summary["log_records"] = sum(len(v) for v in dataset.values())
        if args.campaigns:
            camps = read_campaigns(args.campaigns)
            summary["calibration"] = calibration_from_logs(dataset, model, camps)
    vol = np.bincount(model.traffic.step, minlength=args.steps) / model.n_periods
    summary["mean_impressions_per_step"] = [float(v) for v in vol]
    path = _out(args, "predictor.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"empirical model on periods {','.join(map(str, model.periods))}: "
          f"{summary['n_impressions']} impressions, calibration {summary['calibration']:.6g}")
    if "log_records" in summary:
        print(f"logs: {summary['log_records']} records over {summary['log_campaigns']} campaign(s)")
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    seed = resolve_seed(args) or 0
    results = run_all(seed=seed, n_gap=args.n_gap, n_mono=args.n_mono, n_grid=args.grid,
                      n_conv=args.n_conv, n_pos=args.n_pos)
    path = _out(args, "verify.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(VERIFY_HEADER)
        for r in results:
            w.writerow([r.name, r.checked, r.failures, r.skipped, "pass" if r.ok else "FAIL"])
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.checked} checked, {r.failures} failed, "
              f"{r.skipped} skipped ({r.seconds:.1f}s)")
        for msg in r.examples:
            print(f"    {msg}")
    print(f"wrote {path}")
    return 0 if all(r.ok for r in results) else 1


def _plot_rows(rows: list) -> list:
    out, cum = [], [0.0, 0.0, 0.0]
    for r in rows:
        for k, key in enumerate(("cost", "clicks", "value")):
            cum[k] += float(r[key])
        out.append([r["step"], r["p"], r["q_u"], r["q_l"], r["alpha"], r["beta"]] +
                   [repr(x) for x in cum])
    return out


def cmd_report(args) -> int:
    log_dir = args.log_dir or os.path.join(args.out_dir, "episodes")
    files = sorted(glob.glob(os.path.join(log_dir, "*.csv")))
    if not files:
        raise CliError(f"no episode logs in {log_dir}")
    dest = _out(args, "plots")
    os.makedirs(dest, exist_ok=True)
    n = 0
    for path in files:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != EPISODE_HEADER:
                raise CliError(f"{path}:1: not an episode log (header {reader.fieldnames})")
            by_campaign = {}
            for row in reader:
                by_campaign.setdefault(row["campaign_id"], []).append(row)
        stem = os.path.splitext(os.path.basename(path))[0]
        for cid, rows in by_campaign.items():
            rows.sort(key=lambda r: int(r["step"]))
            out = os.path.join(dest, f"{stem}_{cid}.csv")
            with open(out, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(PLOT_HEADER)
                w.writerows(_plot_rows(rows))
            n += 1
    print(f"wrote {n} plot file(s) to {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $BICB_SEED, else 0)")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    common.add_argument("--config", default=None, help="TOML experiment config file")

    ap = argparse.ArgumentParser(prog="bicb", description="Budget and CPC constrained bidding.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("generate", parents=[common], help="write synthetic traffic CSV",
                       description="Write synthetic traffic as period_id,step,pctr,wp,obj.")
    g.add_argument("--n", type=int, default=10000, help="impressions per period (default 10000)")
    g.add_argument("--steps", type=int, default=48, help="steps per period (default 48)")
    g.add_argument("--periods", type=int, default=1, help="number of periods (default 1)")
    g.add_argument("--volume", choices=("diurnal", "uniform"), default="diurnal",
                   help="per-step volume profile (default diurnal)")
    g.add_argument("--output", default=None, help="output path (default OUT_DIR/traffic.csv)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", parents=[common], help="run the train/test day protocol",
                       description="Run every method on a train/test day pair and write "
                                   "report.csv, episodes/ and logs/ under OUT_DIR.")
    s.add_argument("--setting", choices=SETTINGS, default=None,
                   help="bcb (budget only) or bicb (budget and CPC window)")
    s.add_argument("--methods", default=None,
                   help=f"comma-separated subset of {','.join(METHODS)}")
    s.add_argument("--traffic", default=None,
                   help="traffic CSV; first two periods are train and test")
    s.add_argument("--n", type=int, default=None, help="synthetic impressions per day")
    s.add_argument("--steps", type=int, default=None, help="steps per day")
    s.add_argument("--campaigns", type=int, default=None, help="number of campaigns")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="fit the empirical predictor",
                       description="Build the empirical replay predictor from historical "
                                   "traffic, optionally calibrated from control logs, and "
                                   "write OUT_DIR/predictor.json.")
    t.add_argument("--traffic", default=None, help="historical traffic CSV (default: synthetic)")
    t.add_argument("--periods", default=None, help="comma-separated period ids to train on")
    t.add_argument("--n", type=int, default=10000, help="synthetic impressions per day")
    t.add_argument("--days", type=int, default=1, help="synthetic history length in days")
    t.add_argument("--steps", type=int, default=48, help="steps per period (default 48)")
    t.add_argument("--calibration", type=float, default=1.0, help="volume calibration factor")
    t.add_argument("--logs", nargs="+", default=None,
                   help="control-log CSV files (campaign_id,step,p,q_u,q_l,cost,clicks)")
    t.add_argument("--campaigns", default=None,
                   help="campaign CSV for calibrating against the logs")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", parents=[common], help="run the property suites",
                       description="Run the randomized property suites; exit 1 on any failure.")
    v.add_argument("--n-gap", type=int, default=1000, help="greedy-gap instances (default 1000)")
    v.add_argument("--n-mono", type=int, default=100,
                   help="monotonicity instances (default 100)")
    v.add_argument("--grid", type=int, default=20, help="grid points per sweep (default 20)")
    v.add_argument("--n-conv", type=int, default=1000, help="convergence solves (default 1000)")
    v.add_argument("--n-pos", type=int, default=100,
                   help="positivity campaigns (default 100)")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", parents=[common], help="per-episode time series for plotting",
                       description="Turn episode logs into one CSV per campaign episode with "
                                   "duals, bid line and cumulative totals per step.")
    r.add_argument("--log-dir", default=None, help="episode log directory "
                                                   "(default OUT_DIR/episodes)")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, TrafficFormatError, ValueError, OSError) as e:
        print(f"bicb {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
