import csv
import subprocess
import sys

import numpy as np
import pytest

from pppcausal import ObservedSample, write_csv
from pppcausal.cli import EXIT_CODES, build_parser, parse_methods, run
from pppcausal.ppp import REPORT_FIELDS


@pytest.fixture
def data_csv(tmp_path, small_sample):
    path = tmp_path / "data.csv"
    write_csv(small_sample, path)
    return path


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _help(*cmd):
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args([*cmd, "--help"])


@pytest.mark.parametrize("cmd", [(), ("ppp",), ("frt",), ("normal",), ("simulate",), ("summarize",)])
def test_help_lists_exit_codes(cmd, capsys):
    _help(*cmd)
    out = capsys.readouterr().out
    for code in EXIT_CODES:
        assert f"  {code}  " in out


def test_help_lists_flags(capsys):
    _help("ppp")
    out = capsys.readouterr().out
    for flag in ("--data", "--estimator", "--studentized", "--se-method", "--algorithm", "--draws",
                 "--burnin", "--inner-draws", "--seed", "--threads", "--out", "--export-draws"):
        assert flag in out
    _help("simulate")
    out = capsys.readouterr().out
    for flag in ("--dgp", "--scenario", "--reps", "--n", "--tau-shift", "--flip", "--methods", "--config"):
        assert flag in out


def test_ppp_run(tmp_path, data_csv, capsys):
    code = run(["ppp", "--data", str(data_csv), "--draws", "30", "--burnin", "30",
                "--out", str(tmp_path), "--run-name", "r1", "--export-draws"])
    assert code == 0
    rows = _read(tmp_path / "r1" / "report.csv")
    assert tuple(rows[0]) == REPORT_FIELDS and rows[1][0] == "ppp_a"
    assert 0 < float(rows[1][3]) <= 1
    draws = _read(tmp_path / "r1" / "draws.csv")
    assert draws[0] == ["intercept", "a", "b"] and len(draws) == 31
    cfg = (tmp_path / "r1" / "config.txt").read_text()
    assert "draws=30\n" in cfg and "seed=0\n" in cfg
    assert "ppp_a" in capsys.readouterr().out


def test_ppp_algorithm_b_and_normal(tmp_path, data_csv):
    assert run(["ppp", "--data", str(data_csv), "--algorithm", "b", "--draws", "3", "--burnin", "20",
                "--inner-draws", "5", "--no-studentized", "--out", str(tmp_path), "--run-name", "b"]) == 0
    assert _read(tmp_path / "b" / "report.csv")[1][:3] == ["ppp_b", "dr", "0"]
    assert run(["normal", "--data", str(data_csv), "--estimator", "ipw", "--out", str(tmp_path), "--run-name", "n"]) == 0
    assert _read(tmp_path / "n" / "report.csv")[1][:2] == ["normal", "ipw"]


def test_frt_designs(tmp_path, data_csv, small_sample):
    m = int(small_sample.z.sum())
    assert run(["frt", "--data", str(data_csv), "--design", f"complete:m={m}", "--inner-draws", "30",
                "--no-studentized", "--out", str(tmp_path), "--run-name", "c"]) == 0
    assert run(["frt", "--data", str(data_csv), "--design", "bernoulli:p=0.5", "--inner-draws", "30",
                "--out", str(tmp_path), "--run-name", "p"]) == 0
    with_e = ObservedSample(small_sample.z, small_sample.y,
                            np.column_stack([small_sample.X, np.full(small_sample.n, 0.4)]), ("a", "b", "e"))
    path = tmp_path / "with_e.csv"
    write_csv(with_e, path)
    assert run(["frt", "--data", str(path), "--design", "bernoulli:column=e", "--inner-draws", "30",
                "--out", str(tmp_path), "--run-name", "col"]) == 0


def test_simulate_and_summarize(tmp_path):
    code = run(["simulate", "--reps", "3", "--n", "100", "--draws", "20", "--burnin", "20",
                "--methods", "ppp_a:dr:unstud,normal:dr:stud", "--out", str(tmp_path), "--run-name", "s"])
    assert code == 0
    rows = _read(tmp_path / "s" / "pvalues.csv")
    assert rows[0] == ["replication", "method", "p_value"] and len(rows) == 7
    assert (tmp_path / "s" / "summary.csv").exists()
    assert (tmp_path / "s" / "hist_ppp_a_dr_unstud.svg").exists()
    assert run(["summarize", "--input", str(tmp_path / "s" / "pvalues.csv"),
                "--out", str(tmp_path), "--run-name", "sum"]) == 0
    assert (tmp_path / "sum" / "summary.csv").read_text() == (tmp_path / "s" / "summary.csv").read_text()


def test_thread_count_does_not_change_output(tmp_path):
    base = ["simulate", "--reps", "4", "--n", "100", "--draws", "20", "--burnin", "20",
            "--methods", "ppp_a:dr:stud,normal:dr:stud", "--seed", "3", "--out", str(tmp_path)]
    assert run(base + ["--threads", "1", "--run-name", "t1"]) == 0
    assert run(base + ["--threads", "2", "--run-name", "t2"]) == 0
    for name in ("pvalues.csv", "summary.csv", "config.txt"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t2" / name).read_bytes()


def test_config_file(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("# pilot\nreps = 2\nn=80\ndraws=10\nburnin=10\nmethods=normal:dr:stud\n")
    assert run(["simulate", "--config", str(cfg), "--n", "90", "--out", str(tmp_path), "--run-name", "cfg"]) == 0
    text = (tmp_path / "cfg" / "config.txt").read_text()
    assert "reps=2\n" in text and "n=90\n" in text
    cfg.write_text("bogus=1\n")
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_parse_methods():
    ms = parse_methods("ppp_a:dr:stud,ppp_b:ipw:unstud,normal:reg:stud:boot")
    assert [m.kind for m in ms] == ["ppp_a", "ppp_b", "normal"]
    assert ms[2].statistic.se_method == "bootstrap" and not ms[1].statistic.studentized


@pytest.mark.parametrize("argv", [
    ["ppp", "--data", "x.csv", "--bogus"],
    ["ppp", "--data", "x.csv", "--estimator", "tmle"],
    ["frt", "--data", "x.csv", "--design", "stratified:k=2"],
    ["simulate", "--methods", "normal:dr:unstud"],
    ["ppp", "--data", "x.csv", "--inner-draws", "5"],
])
def test_usage_errors(argv, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path)]) == 2
    assert "error: code=2" in capsys.readouterr().err


def test_data_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("z,y,x1\n1,0.5,1\n2,0.1,2\n")
    assert run(["normal", "--data", str(bad), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "code=3" in err and "row 2" in err
    assert run(["normal", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 3


def test_model_error(tmp_path, capsys):
    path = tmp_path / "sep.csv"
    write_csv(ObservedSample(np.array([0, 0, 0, 1, 1, 1] * 5), np.arange(30.0), np.arange(30.0) % 6), path)
    assert run(["normal", "--data", str(path), "--out", str(tmp_path)]) == 4
    assert "SeparationError" in capsys.readouterr().err


def test_console_script(tmp_path, data_csv):
    proc = subprocess.run(
        [sys.executable, "-m", "pppcausal.cli", "normal", "--data", str(data_csv), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "normal estimator=dr" in proc.stdout
