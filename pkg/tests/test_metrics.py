import math

import numpy as np
import pytest

from msalasso.core import ConfigError, DataError, GroundTruth
from msalasso.metrics import (
    METRICS,
    SimRow,
    SimTable,
    analytic_prediction_error,
    count_fp_fn,
    emit_table,
    format_2dp,
    run_simulation,
    squared_error,
)
from msalasso.simgen import SimConfig, calibrate_c


def truth_for(p=10, p_act=3, rho=0.0, sigma=1.0):
    c = calibrate_c(p_act, rho, 9.0, sigma)
    b = np.zeros(p)
    b[:p_act] = c
    return GroundTruth(b, rho, sigma, c, p_act)


def test_squared_error_examples():
    t = truth_for()
    assert squared_error(t.beta_true, t.beta_true) == 0.0
    assert squared_error(np.zeros(10), t.beta_true) == pytest.approx(9.0, abs=1e-12)
    e1 = np.zeros(10)
    e1[0] = 1.0
    assert squared_error(t.beta_true + e1, t.beta_true) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DataError):
        squared_error(np.zeros(3), np.zeros(4))


def test_fp_fn_examples():
    truth = np.array([1.0, 1.0, 1.0, 0.0, 0.0])
    assert count_fp_fn(truth, truth) == (0, 0)
    assert count_fp_fn(np.array([2.0, 0.5, 0.0, 0.3, 0.0]), truth) == (1, 1)
    assert count_fp_fn(np.zeros(5), truth) == (0, 3)
    with pytest.raises(DataError):
        count_fp_fn(np.zeros(4), truth)


def test_prediction_error_examples():
    t = truth_for(sigma=1.3)
    assert analytic_prediction_error(t.beta_true, t) == pytest.approx(1.69)
    hat = t.beta_true + np.linspace(-1, 1, 10)
    assert analytic_prediction_error(hat, t) == pytest.approx(squared_error(hat, t.beta_true) + 1.69, abs=1e-10)
    t5 = truth_for(rho=0.5, sigma=0.7)
    d = np.zeros(10)
    d[:2] = 1.0
    assert analytic_prediction_error(t5.beta_true + d, t5) == pytest.approx(3.0 + 0.49, abs=1e-12)


def test_prediction_error_matches_dense_quadratic_form(rng):
    t = truth_for(p=40, rho=0.8)
    i = np.arange(40)
    sigma = 0.8 ** np.abs(i[:, None] - i[None, :])
    for _ in range(5):
        diff = rng.standard_normal(40)
        expected = diff @ sigma @ diff + 1.0
        assert analytic_prediction_error(t.beta_true + diff, t) == pytest.approx(expected, rel=1e-12)


def test_format_rounds_half_away_from_zero():
    assert format_2dp(6.1049) == "6.10"
    assert format_2dp(12.0651) == "12.07"
    assert format_2dp(0.125) == "0.13"
    assert format_2dp(-0.125) == "-0.13"
    assert format_2dp(2.675) == "2.68"


def test_emit_table_formats():
    t = SimTable(rows=[SimRow("k=2", "fp", 0.0, 3, 6.1049, 12.0651)])
    md = emit_table(t, "markdown")
    assert "6.10 (12.07)" in md
    csv = emit_table(t, "csv").splitlines()
    assert csv[0] == "estimator,metric,rho,p_act,mean,sd"
    assert csv[1] == "k=2,fp,0.0,3,6.1049,12.0651"
    assert emit_table(SimTable(), "csv") == "estimator,metric,rho,p_act,mean,sd\n"
    assert emit_table(SimTable(), "markdown").count("\n") == 2
    with pytest.raises(ConfigError):
        emit_table(t, "latex")


SMALL = SimConfig(p=60, n_train=40, n_val=20, runs=6, seed=11)


def test_single_run_has_zero_sd():
    t = run_simulation(SimConfig(p=60, n_train=40, n_val=20, runs=1))
    assert t.runs_completed == 1
    assert all(r.sd == 0.0 for r in t.rows)


def test_noiseless_recovery():
    # the chosen lambda sits at the grid floor, so SE scales with grid_ratio**2
    cfg = SimConfig(runs=5, sigma=1e-8, calibration_sigma=1.0, grid_ratio=1e-4)
    t = run_simulation(cfg)
    for k in (1, 2, 3):
        assert t.lookup(f"k={k}", "fn", 0.0, 3).mean == 0
    for k in (2, 3):
        assert t.lookup(f"k={k}", "fp", 0.0, 3).mean == 0
        assert t.lookup(f"k={k}", "squared_error", 0.0, 3).mean < 1e-6


def test_aggregation_matches_streaming_recomputation():
    t = run_simulation(SMALL)
    for row in t.rows:
        # Welford's online mean / variance
        n, mean, m2 = 0, 0.0, 0.0
        for m in t.run_metrics:
            x = m.get(row.estimator, row.metric)
            n += 1
            delta = x - mean
            mean += delta / n
            m2 += delta * (x - mean)
        assert row.mean == pytest.approx(mean, abs=1e-10)
        assert row.sd == pytest.approx(math.sqrt(m2 / (n - 1)), abs=1e-10)


def test_harness_invariants_per_run():
    t = run_simulation(SimConfig(p=80, n_train=40, n_val=20, runs=8, rho=0.0, seed=5))
    for m in t.run_metrics:
        for k in (2, 3):
            assert m.get(f"k={k}", "fp") <= m.get(f"k={k - 1}", "fp")
            assert m.get(f"k={k}", "fn") >= m.get(f"k={k - 1}", "fn")
        for k in (1, 2, 3):
            pe = m.get(f"k={k}", "pred_error") - 1.0
            assert pe == pytest.approx(m.get(f"k={k}", "squared_error"), abs=1e-10)
            size = m.get(f"k={k}", "support_size")
            assert size == m.get(f"k={k}", "fp") + 3 - m.get(f"k={k}", "fn")
            assert size <= 40


def test_thread_count_does_not_change_results():
    a = emit_table(run_simulation(SMALL, threads=1), "csv")
    b = emit_table(run_simulation(SMALL, threads=3), "csv")
    assert a == b


def test_two_stage_rows_present():
    cfg = SimConfig(p=40, n_train=30, n_val=15, runs=2, include_two_stage_opt=True, grid1_length=8, grid2_length=8)
    t = run_simulation(cfg)
    labels = {r.estimator for r in t.rows}
    assert labels == {"k=1", "k=2", "k=3", "1-step-opt"}
    assert {r.metric for r in t.rows} == set(METRICS)
