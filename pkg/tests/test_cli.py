import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from msalasso import cli
from msalasso.core import ConfigError, DataError, standardize
from msalasso.msa import TuneMethod, select_lambda
from msalasso.simgen import SimConfig
from msalasso.solver import SolverConfig, solve_path
from msalasso.weights import uniform_weights


def write_csv(path, x, y, names=None, response="y"):
    names = names or [f"x{j}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [response])
        for row, v in zip(x, y):
            w.writerow([repr(float(a)) for a in row] + [repr(float(v))])
    return path


def make_data(tmp_path, rng, n=40, p=8, name="data.csv"):
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:3] = [2.0, -1.5, 1.0]
    y = x @ beta + 0.3 * rng.standard_normal(n)
    return write_csv(tmp_path / name, x, y), x, y


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_read_csv_shape(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,y,b\n1,2,3\n4,5,6\n7,8,9\n")
    d = cli.read_csv_dataset(f, "y")
    assert (d.n, d.p) == (3, 2)
    assert d.names() == ["a", "b"]
    assert np.array_equal(d.y, [2, 5, 8])
    assert np.array_equal(d.x[:, 1], [3, 6, 9])


def test_read_csv_missing_response(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,b\n1,2\n3,4\n")
    with pytest.raises(DataError, match="available columns: a, b"):
        cli.read_csv_dataset(f, "y")


def test_read_csv_nan_cites_row(tmp_path):
    lines = ["a,y"] + [f"{i},{i}" for i in range(6)] + ["NaN,1", "2,2"]
    f = tmp_path / "d.csv"
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="row 7"):
        cli.read_csv_dataset(f, "y")


@pytest.mark.parametrize(
    "body, message",
    [("a,y\n1,2\n", "at least 2"), ("a,y\n1,2\n1\n", "fields"), ("", "empty"), ("a,y\nq,1\n2,2\n", "'q'")],
)
def test_read_csv_errors(tmp_path, body, message):
    f = tmp_path / "d.csv"
    f.write_text(body)
    with pytest.raises(DataError, match=message):
        cli.read_csv_dataset(f, "y")


def test_parse_tune():
    assert cli.parse_tune("holdout:0.25") == ("holdout", 0.25)
    assert cli.parse_tune("cv:10") == ("cv", 10)
    for bad in ("holdout:1.0", "cv:1", "loo", "cv:x"):
        with pytest.raises(ConfigError):
            cli.parse_tune(bad)


def test_holdout_split_is_seeded_and_disjoint():
    tr, va = cli.holdout_split(30, 0.33, 4)
    assert len(va) == 10 and len(tr) == 20
    assert set(tr).isdisjoint(va) and set(tr) | set(va) == set(range(30))
    assert np.array_equal(va, cli.holdout_split(30, 0.33, 4)[1])
    with pytest.raises(ConfigError, match="validation split too small"):
        cli.holdout_split(10, 0.99, 0)


def test_fit_one_step_equals_tuned_lasso(tmp_path, rng):
    data, x, y = make_data(tmp_path, rng)
    out = tmp_path / "fit.csv"
    assert cli.main(["fit", "--data", str(data), "--response", "y", "-M", "1", "--seed", "3", "-o", str(out)]) == 0
    d = cli.read_csv_dataset(data, "y")
    tr, va = cli.holdout_split(d.n, 0.33, 3)
    std = standardize(d.subset(tr))
    path = solve_path(std, uniform_weights(d.p), SolverConfig())
    lam, coef, _ = select_lambda(path, TuneMethod.holdout(d.subset(va)), std)
    beta = coef.beta / std.x_scale
    rows = read_rows(out)
    got = {r["column"]: float(r["coefficient"]) for r in rows}
    assert np.allclose([got[f"x{j}"] for j in range(d.p)], beta, atol=1e-12)
    icpt = std.y_center + coef.intercept - beta @ std.x_center
    assert got["(intercept)"] == pytest.approx(icpt, abs=1e-12)
    steps = read_rows(f"{out}.steps.csv")
    assert float(steps[0]["lambda"]) == lam
    meta = (tmp_path / "fit.csv.meta").read_text()
    assert "validation_rows = " + ",".join(str(i + 1) for i in va) in meta


def test_fit_three_steps_support_non_increasing(tmp_path, rng):
    data, _, _ = make_data(tmp_path, rng, n=60, p=20)
    out = tmp_path / "fit.csv"
    assert cli.main(["fit", "--data", str(data), "--response", "y", "-o", str(out)]) == 0
    sizes = [int(r["support_size"]) for r in read_rows(f"{out}.steps.csv")]
    assert len(sizes) == 3 and sizes == sorted(sizes, reverse=True)
    coefs = read_rows(out)
    for k in (2, 3):
        nz = lambda s: {r["column"] for r in coefs if r["step"] == str(s) and r["column"] != "(intercept)" and float(r["coefficient"]) != 0}
        assert nz(k) <= nz(k - 1)


@pytest.mark.parametrize("args", [["--weights", "scad"], ["--weights", "mle"], ["--tune", "cv:4"], ["--spacing", "l1_fraction"]])
def test_fit_variants(tmp_path, rng, args):
    data, _, _ = make_data(tmp_path, rng)
    out = tmp_path / "fit.csv"
    assert cli.main(["fit", "--data", str(data), "--response", "y", "-o", str(out)] + args) == 0
    assert len(read_rows(out)) == 3 * 9


def test_fit_tiny_holdout_fails_without_output(tmp_path, rng, capsys):
    data, _, _ = make_data(tmp_path, rng, n=10, p=3)
    out = tmp_path / "fit.csv"
    code = cli.main(["fit", "--data", str(data), "--response", "y", "--tune", "holdout:0.99", "-o", str(out)])
    assert code == cli.EXIT_CONFIG
    assert "validation split too small" in capsys.readouterr().err
    assert os.listdir(tmp_path) == ["data.csv"]


def test_fit_missing_file_is_data_error(tmp_path):
    code = cli.main(["fit", "--data", str(tmp_path / "nope.csv"), "--response", "y", "-o", str(tmp_path / "o")])
    assert code == cli.EXIT_DATA


def test_usage_error_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--data", "x.csv"])
    assert exc.value.code == cli.EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, rng, capsys):
    data, _, _ = make_data(tmp_path, rng, n=40, p=30)
    out = tmp_path / "fit.csv"
    code = cli.main(["fit", "--data", str(data), "--response", "y", "--max-iters", "1", "--tol", "1e-14", "-o", str(out)])
    assert code == cli.EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err
    assert not out.exists()


def test_path_output(tmp_path, rng):
    data, x, y = make_data(tmp_path, rng, n=50, p=5)
    out = tmp_path / "path.csv"
    assert cli.main(["path", "--data", str(data), "--response", "y", "--grid-ratio", "1e-6", "-o", str(out)]) == 0
    rows = read_rows(out)
    lams = [float(r["lambda"]) for r in rows]
    assert lams == sorted(lams, reverse=True)
    d = cli.read_csv_dataset(data, "y")
    lmax = solve_path(standardize(d), uniform_weights(5)).lambdas[0]
    assert all(lam < lmax for lam in lams)
    last = {r["column"]: float(r["coefficient"]) for r in rows if float(r["lambda"]) == lams[-1]}
    xa = np.column_stack([np.ones(50), x])
    ols = np.linalg.lstsq(xa, y, rcond=None)[0][1:]
    assert np.allclose([last[f"x{j}"] for j in range(5)], ols, atol=1e-2)


@pytest.mark.parametrize("weights", ["adaptive", "scad"])
def test_path_with_data_driven_weights(tmp_path, rng, weights):
    data, _, _ = make_data(tmp_path, rng, n=50, p=10)
    out = tmp_path / "path.csv"
    assert cli.main(["path", "--data", str(data), "--response", "y", "--weights", weights, "-o", str(out)]) == 0
    assert read_rows(out)


def test_path_empty_dataset(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("a,b,y\n")
    out = tmp_path / "p.csv"
    assert cli.main(["path", "--data", str(f), "--response", "y", "-o", str(out)]) != 0
    assert not out.exists()


TINY = "p = 40\nn_train = 30\nn_val = 15\nruns = {runs}\nrho = {rho}\n"


def test_simulate_is_byte_identical(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(TINY.format(runs=1, rho=0.0))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["simulate", "--config", str(cfg), "--seed", "9", "-o", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(cfg), "--seed", "9", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_rows(a)
    assert {r["estimator"] for r in rows} == {"k=1", "k=2", "k=3"}
    assert {"squared_error", "fp", "fn"} <= {r["metric"] for r in rows}


def test_simulate_invalid_rho(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(TINY.format(runs=1, rho=1.5) + "n_val = -1\n")
    out = tmp_path / "t.csv"
    assert cli.main(["simulate", "--config", str(cfg), "-o", str(out)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "rho" in err and "n_val" in err
    assert not out.exists()


def test_simulate_campaign_lists_and_markdown(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(TINY.format(runs=2, rho="0.0, 0.5") + "p_act = 3\n")
    out = tmp_path / "t.md"
    assert cli.main(["simulate", "--config", str(cfg), "--format", "markdown", "-o", str(out)]) == 0
    text = out.read_text()
    assert "0.5" in text and "k=3" in text
    assert "wall-clock" in capsys.readouterr().err.lower()


def test_threads_flag_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(TINY.format(runs=4, rho=0.2))
    outs = []
    for i, (flag, env) in enumerate([(None, None), ("3", None), (None, "2"), ("1", "4")]):
        if env is None:
            monkeypatch.delenv("MSALASSO_THREADS", raising=False)
        else:
            monkeypatch.setenv("MSALASSO_THREADS", env)
        out = tmp_path / f"t{i}.csv"
        argv = ["simulate", "--config", str(cfg), "-o", str(out)] + (["--threads", flag] if flag else [])
        assert cli.main(argv) == 0
        outs.append(out.read_bytes())
    assert len(set(outs)) == 1
    monkeypatch.setenv("MSALASSO_THREADS", "many")
    assert cli.main(["simulate", "--config", str(cfg), "-o", str(tmp_path / "x.csv")]) == cli.EXIT_CONFIG


def test_config_round_trip():
    cfg = SimConfig(p=77, rho=0.35, sigma=0.5, include_two_stage_opt=True, seed=5, tuning_spacing="l1_fraction")
    assert SimConfig.from_text(cfg.to_text()) == cfg
    assert cli.load_campaign(cfg.to_text()) == [cfg]


def test_console_script_runs(tmp_path, rng):
    data, _, _ = make_data(tmp_path, rng, n=30, p=4)
    res = subprocess.run(
        [sys.executable, "-m", "msalasso.cli", "fit", "--data", str(data), "--response", "y", "-o", "-"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("step,column,coefficient\n")
    assert "step,lambda,support_size,validation_loss" in res.stdout
