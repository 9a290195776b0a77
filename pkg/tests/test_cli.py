#!/usr/bin/env python3

import json
import logging
import math

import pytest
from scipy import stats

from ballprob import analysis, cli
from ballprob._version import __version__
from ballprob.configure import DEFAULT_SEED, CorpusConfig
from ballprob.corpus import generate
from ballprob.errors import NumericalError
from ballprob.utils import write_frame

log = logging.getLogger("BP.test")
log.setLevel("ERROR")
log.parent.setLevel("ERROR")

X_INSTANCE = '{"spectrum": [1, 1, 1], "shift": [0.5, 0, 0]}'
Y_INSTANCE = '{"spectrum": [1.2, 1, 0.9]}'


def read_lines(text):
    return [json.loads(line) for line in text.splitlines() if line]


def test_main_file(capsys):
    with pytest.raises(SystemExit) as exit_info:
        cli.parse_args(["--version"])

    out, _ = capsys.readouterr()
    assert exit_info.value.code == 0
    assert __version__ in out


def test_kappa(capsys):
    assert cli.run(["kappa", "--spectrum", "[1, 1, 1]"]) == cli.EXIT_OK
    (record,) = read_lines(capsys.readouterr().out)
    assert record["kappa"] == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    assert record["regime"] == "HighDim"
    assert record["effective_rank"] == pytest.approx(3.0)


def test_cdf_lines(capsys):
    assert cli.run(["cdf", "--spectrum", "1,1,1", "--x", "1,2"]) == cli.EXIT_OK
    records = read_lines(capsys.readouterr().out)
    assert [r["x"] for r in records] == [1.0, 2.0]
    for r in records:
        assert r["cdf"] == pytest.approx(stats.chi2.cdf(r["x"], 3), abs=1e-6)
        assert r["err_est"] <= 1e-6


def test_cdf_csv(capsys):
    assert cli.run(["cdf", "--spectrum", "1,1,1", "--x", "1,2", "--format", "csv"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,cdf,err_est"
    assert len(lines) == 3


def test_experiment_degenerate_band(capsys):
    assert cli.run(["experiment", "degenerate-band", "--eps", "0.25"]) == cli.EXIT_OK
    (record,) = read_lines(capsys.readouterr().out)
    assert record["name"] == "degenerate-band"
    assert record["observed"] == pytest.approx(0.38292, abs=1e-5)
    assert record["verdict"] == "pass"


def test_experiment_needs_its_option(capsys):
    assert cli.run(["experiment", "one-dim"]) == cli.EXIT_DOMAIN
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "DomainError"


def test_compare_inline_json(capsys):
    assert cli.run(["compare", "--x", X_INSTANCE, "--y", Y_INSTANCE]) == cli.EXIT_OK
    (record,) = read_lines(capsys.readouterr().out)
    assert 0 < record["distance"] < record["bound"]["value"]
    assert record["bound"]["formula_id"] == "comparison"


def test_bound(capsys):
    assert cli.run(["bound", "--x", '{"spectrum": [4, 1], "shift": [1, 1]}', "--y", '{"spectrum": [4, 1]}']) == 0
    (record,) = read_lines(capsys.readouterr().out)
    assert record["value"] == pytest.approx(2.0)


def test_negative_spectrum_exits_with_domain_error(capsys):
    assert cli.run(["kappa", "--spectrum", "[-1, 1]"]) == cli.EXIT_DOMAIN
    captured = capsys.readouterr()
    assert captured.out == ""
    err = json.loads(captured.err)
    assert err["error"] == "DomainError"


def test_condition_error_names_the_spectrum(capsys):
    args = ["bound", "--formula", "comparison_frobenius", "--x", '{"spectrum": [4, 1]}', "--y", X_INSTANCE]
    assert cli.run(args) == cli.EXIT_DOMAIN
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConditionError"
    assert err["which"] == "sx"


def test_numerical_error_exit_code(capsys, monkeypatch):
    def failing(ns, cfg):
        raise NumericalError("inversion failed", err_est=1e-3)

    monkeypatch.setitem(cli.COMMANDS, "kappa", failing)
    assert cli.run(["kappa", "--spectrum", "[1, 1]"]) == cli.EXIT_NUMERICAL
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NumericalError"
    assert err["err_est"] == 1e-3


def test_usage_errors():
    assert cli.run(["kappa", "--bogus"]) == cli.EXIT_USAGE
    assert cli.run(["no-such-command"]) == cli.EXIT_USAGE
    assert cli.run([]) == cli.EXIT_USAGE
    assert cli.run(["kappa", "--spectrum", "one,two"]) == cli.EXIT_USAGE


def test_bad_tolerance(capsys):
    assert cli.run(["kappa", "--spectrum", "[1, 1]", "--abs-tol", "-1"]) == cli.EXIT_DOMAIN
    assert json.loads(capsys.readouterr().err)["error"] == "ValueError"


def test_sweep_holder_is_deterministic(tmp_path):
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    for out in (first, second):
        assert cli.run(["sweep", "holder", "--n-instances", "9", "--out", str(out)]) == cli.EXIT_OK
    text = first.read_text()
    assert text.splitlines()[0] == "instance_id,scaled,ok"
    assert text == second.read_text()


def test_bayes_ill_conditioned(capsys):
    assert cli.run(["bayes", "--ill-conditioned"]) == cli.EXIT_OK
    (record,) = read_lines(capsys.readouterr().out)
    assert record["name"] == "prior-impact"
    assert record["extra"]["pinsker"] > record["bound"]


@pytest.mark.parametrize("command", ["cdf", "density"])
def test_unreachable_tolerance_exits_numerical(command, capsys):
    args = [command, "--spectrum", "[1, 1, 1]", "--x", "[1.0]", "--abs-tol", "1e-300"]
    assert cli.run(args) == cli.EXIT_NUMERICAL
    captured = capsys.readouterr()
    assert captured.out == ""
    err = json.loads(captured.err)
    assert err["error"] == "NumericalError"
    assert err["err_est"] > 1e-300


def test_experiment_help_names_each_construction(capsys):
    with pytest.raises(SystemExit) as exit_info:
        cli.parse_args(["experiment", "--help"])
    out, _ = capsys.readouterr()
    assert exit_info.value.code == 0
    for name in cli.EXPERIMENTS:
        assert name in out
    assert "third eigenvalue" in " ".join(out.split())


def test_sweep_ratio_reuses_the_corpus(tmp_path):
    out = tmp_path / "ratio.csv"
    assert cli.run(["sweep", "ratio", "--n-instances", "3", "--threads", "1", "--out", str(out)]) == cli.EXIT_OK
    instances = generate(CorpusConfig(seed=DEFAULT_SEED, n_instances=3))
    expected = analysis.sweep_frame(instances, analysis.compare_instances(instances, threads=1))
    assert out.read_text() == write_frame(expected, None)


def test_sweep_calibrate(tmp_path):
    out = tmp_path / "calibrate.csv"
    args = ["sweep", "calibrate", "--n-instances", "3", "--eps", "0.1", "--threads", "1", "--out", str(out)]
    assert cli.run(args) == cli.EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "constant,observed_max,frozen,margin,ok"
    assert [line.split(",")[0] for line in lines[1:]] == ["comparison", "band", "density"]
    assert all(line.endswith("True") for line in lines[1:])
