from __future__ import annotations

import json

import numpy as np
import pytest

from expscreen.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, main
from expscreen.harness import write_problem_csv
from expscreen.linalg import DesignProblem

CONFIG = {
    "name": "tiny",
    "design": {"kind": "rademacher", "n": 30, "M": 10},
    "S": 2,
    "replications": 2,
    "T0": 50,
    "T": 200,
    "estimators": [{"name": "ES", "kind": "es"}, {"name": "Lasso", "kind": "lasso"}],
    "reference_estimator": "ES",
}


def write_config(tmp_path, **over):
    cfg = dict(CONFIG, **over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_run_csv_and_overrides(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--reps", "3", "--seed", "9"]) == EXIT_OK
    lines = (tmp_path / "o" / "records.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 2
    assert (tmp_path / "o" / "summary.csv").exists()


def test_run_json_threads_identical(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--format", "json"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--format", "json", "--threads", "8"])
    assert (tmp_path / "a" / "records.json").read_bytes() == (tmp_path / "b" / "records.json").read_bytes()


def test_config_error_exit(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = write_config(tmp_path, replications=0)
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_failure_threshold_exit(tmp_path):
    cfg = write_config(tmp_path, design={"kind": "gaussian", "n": 20, "M": 30}, estimators=[{"name": "BIC", "kind": "bic"}], reference_estimator=None)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_FAILURES


def test_rates_command(capsys):
    assert main(["rates", "--n", "100", "--M", "200", "--R", "100", "--sigma", "1", "--s", "10", "--l1", "10", "--D", "5"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"phi", "psi", "zeta", "aggregation"}
    assert set(out["aggregation"]) == {"MS", "C", "L", "L_D", "C_D"}
    assert main(["rates", "--n", "10", "--M", "5", "--R", "9", "--sigma", "1"]) == EXIT_CONFIG


@pytest.mark.filterwarnings("ignore:max column norm")
def test_ingest_and_estimate(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 8))
    theta = np.zeros(8)
    theta[:2] = 1.0
    pr = DesignProblem(X, X @ theta + 0.3 * rng.standard_normal(40))
    write_problem_csv(pr, tmp_path / "X.csv", tmp_path / "y.csv")
    assert main(["ingest", "--design", str(tmp_path / "X.csv"), "--response", str(tmp_path / "y.csv")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert (report["n"], report["M"], report["rank"]) == (40, 8, 8)
    for est in ("es", "es_exact", "lasso_gauss", "bic"):
        rc = main(["estimate", "--design", str(tmp_path / "X.csv"), "--response", str(tmp_path / "y.csv"),
                   "--sigma2", "0.09", "--estimator", est, "--T0", "100", "--T", "1000"])
        assert rc == EXIT_OK
        theta_hat = np.array(json.loads(capsys.readouterr().out)["theta"])
        assert np.linalg.norm(theta_hat - theta) < 0.5
    out = tmp_path / "theta.csv"
    assert main(["estimate", "--design", str(tmp_path / "X.csv"), "--response", str(tmp_path / "y.csv"),
                 "--sigma2", "auto", "--T0", "50", "--T", "200", "--out", str(out)]) == EXIT_OK
    assert np.loadtxt(out, delimiter=",").shape == (8,)


def test_ingest_bad_file(tmp_path):
    p = tmp_path / "X.csv"
    p.write_text("1,2\n3,oops\n")
    assert main(["ingest", "--design", str(p), "--response-column", "0"]) == EXIT_CONFIG
    assert main(["ingest", "--design", str(tmp_path / "nope.csv"), "--response-column", "0"]) == EXIT_CONFIG
