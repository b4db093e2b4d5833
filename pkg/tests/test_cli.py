import argparse
import csv
import os
from pathlib import Path

import pytest

from bicb import cli
from bicb.verify import SuiteResult

FIXTURE = Path(__file__).parent / "data" / "fixture_traffic.csv"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read(path):
    return Path(path).read_bytes()


def test_generate_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("generate", "--n", 10000, "--steps", 48, "--seed", 0, "--output", a) == 0
    assert run("generate", "--n", 10000, "--steps", 48, "--seed", 0, "--output", b) == 0
    assert len(a.read_text().splitlines()) == 10001
    assert read(a) == read(b)


def test_generate_empty(tmp_path):
    assert run("generate", "--n", 0, "--out-dir", tmp_path) == 0
    assert (tmp_path / "traffic.csv").read_text() == "period_id,step,pctr,wp,obj\n"


def test_seed_env_and_override(tmp_path, monkeypatch):
    monkeypatch.setenv("BICB_SEED", "5")
    run("generate", "--n", 200, "--output", tmp_path / "env.csv")
    run("generate", "--n", 200, "--seed", 5, "--output", tmp_path / "five.csv")
    run("generate", "--n", 200, "--seed", 0, "--output", tmp_path / "zero.csv")
    assert read(tmp_path / "env.csv") == read(tmp_path / "five.csv")
    assert read(tmp_path / "env.csv") != read(tmp_path / "zero.csv")
    monkeypatch.setenv("BICB_SEED", "x")
    assert run("generate", "--n", 10, "--out-dir", tmp_path) == 2


def test_simulate_bcb_all_methods(tmp_path):
    assert run("simulate", "--setting", "bcb", "--traffic", FIXTURE, "--campaigns", 2,
               "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert [r["method"] for r in rows] == ["manual", "pid", "online_lp", "bicb", "bicb_star",
                                           "offline_lp"]
    assert all(r["setting"] == "bcb" for r in rows)
    assert len(os.listdir(tmp_path / "episodes")) == 5


def test_simulate_subset_and_determinism(tmp_path):
    args = ("simulate", "--setting", "bicb", "--methods", "bicb,offline_lp", "--traffic", FIXTURE,
            "--campaigns", 2, "--seed", 3)
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b") == 0
    rows = list(csv.DictReader(open(tmp_path / "a" / "report.csv")))
    assert [r["method"] for r in rows] == ["bicb", "offline_lp"]
    assert float(rows[1]["r_over_rstar"]) == 1.0
    for rel in ("report.csv", "episodes/bicb_bicb_seed3.csv", "logs/bicb_bicb_seed3.csv"):
        assert read(tmp_path / "a" / rel) == read(tmp_path / "b" / rel)


def test_simulate_with_config(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('setting = "bcb"\nmethods = ["manual", "offline_lp"]\nseeds = [0, 1]\n'
                   "[traffic.synth]\nn_impressions = 800\n[campaigns]\ncount = 2\n")
    assert run("simulate", "--config", cfg, "--out-dir", tmp_path) == 0
    assert len((tmp_path / "report.csv").read_text().splitlines()) == 3
    # seeds 0 and 1 from the file
    assert sorted(os.listdir(tmp_path / "episodes")) == ["manual_bcb_seed0.csv",
                                                         "manual_bcb_seed1.csv"]


def test_simulate_validation_errors(tmp_path, capsys):
    assert run("simulate", "--methods", "bicb,magic", "--out-dir", tmp_path) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("methods = [\n")
    assert run("simulate", "--config", bad, "--out-dir", tmp_path) == 2
    assert run("simulate", "--config", tmp_path / "missing.toml", "--out-dir", tmp_path) == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as e:
        run("generate", "--bogus")
    assert e.value.code == 2


def test_verify_small(tmp_path):
    code = run("verify", "--n-gap", 50, "--n-mono", 5, "--grid", 5, "--n-conv", 30, "--n-pos", 5,
               "--out-dir", tmp_path / "a")
    assert code == 0
    run("verify", "--n-gap", 50, "--n-mono", 5, "--grid", 5, "--n-conv", 30, "--n-pos", 5,
        "--out-dir", tmp_path / "b")
    text = (tmp_path / "a" / "verify.csv").read_text()
    assert text.splitlines()[0] == "suite,checked,failures,skipped,status"
    assert text == (tmp_path / "b" / "verify.csv").read_text()


def test_verify_failure_exit(tmp_path, monkeypatch):
    import bicb.verify

    bad = SuiteResult("greedy_gap", checked=3)
    bad.fail("instance 1: broken")
    monkeypatch.setattr(bicb.verify, "run_all", lambda **kw: [bad])
    assert run("verify", "--out-dir", tmp_path) == 1
    assert "FAIL" in (tmp_path / "verify.csv").read_text()


def test_report_series(tmp_path):
    run("simulate", "--setting", "bcb", "--methods", "bicb_star,pid", "--traffic", FIXTURE,
        "--campaigns", 1, "--out-dir", tmp_path)
    assert run("report", "--out-dir", tmp_path) == 0
    path = tmp_path / "plots" / "bicb_star_bcb_seed0_c0.csv"
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["step", "p", "q_u", "q_l", "alpha", "beta", "cum_cost",
                             "cum_clicks", "cum_value"]
    assert len(rows) == 48
    ps = [float(r["p"]) for r in rows[1:]]
    assert max(ps) - min(ps) <= 1e-2 * max(ps)
    cum = [float(r["cum_cost"]) for r in rows]
    assert cum == sorted(cum)
    assert (tmp_path / "plots" / "pid_bcb_seed0_c0.csv").exists()


def test_report_empty_dir(tmp_path, capsys):
    (tmp_path / "episodes").mkdir()
    assert run("report", "--out-dir", tmp_path) == 2
    assert "no episode logs" in capsys.readouterr().err


def test_train(tmp_path):
    run("simulate", "--setting", "bicb", "--methods", "bicb", "--traffic", FIXTURE,
        "--campaigns", 2, "--out-dir", tmp_path / "sim")
    assert run("train", "--traffic", FIXTURE, "--periods", "0",
               "--logs", tmp_path / "sim" / "logs" / "bicb_bicb_seed0.csv",
               "--campaigns", tmp_path / "sim" / "logs" / "campaigns_bicb_seed0.csv",
               "--out-dir", tmp_path / "tr") == 0
    import json
    summary = json.loads((tmp_path / "tr" / "predictor.json").read_text())
    assert summary["periods"] == ["0"] and summary["n_impressions"] == 1500
    assert summary["log_records"] == 96 and 0.5 < summary["calibration"] < 2.0
    assert run("train", "--traffic", FIXTURE, "--periods", "7", "--out-dir", tmp_path) == 2
    assert run("train", "--n", 500, "--days", 2, "--out-dir", tmp_path / "syn") == 0


def test_help_documents_every_flag():
    parser = cli.build_parser()
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    assert set(subs.choices) == {"generate", "simulate", "train", "verify", "report"}
    for name, sp in subs.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            assert action.help, (name, action.option_strings)
        for flag in ("--seed", "--out-dir", "--config"):
            assert flag in text
