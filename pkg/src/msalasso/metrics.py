"""Estimation metrics and the Monte-Carlo harness that aggregates them."""
from __future__ import annotations

import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

import numpy as np

from . import _kernels
from .core import ConfigError, ConvergenceError, DataError, GroundTruth, InvariantError
from .msa import TuneMethod, run_msa_lasso, run_two_stage_grid
from .simgen import SimConfig, gen_instance
from .solver import SolverConfig

METRICS = ("squared_error", "fp", "fn", "pred_error", "support_size")
TWO_STAGE = "1-step-opt"
CSV_HEADER = "estimator,metric,rho,p_act,mean,sd"


def _pair(beta_hat, beta_true):
    a = np.asarray(beta_hat, dtype=float)
    b = np.asarray(beta_true, dtype=float)
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def squared_error(beta_hat, beta_true) -> float:
    a, b = _pair(beta_hat, beta_true)
    d = a - b
    return float(d @ d)


def count_fp_fn(beta_hat, beta_true) -> tuple[int, int]:
    a, b = _pair(beta_hat, beta_true)
    sel, act = a != 0, b != 0
    return int(np.sum(sel & ~act)), int(np.sum(~sel & act))


def analytic_prediction_error(beta_hat, truth: GroundTruth) -> float:
    """Expected squared prediction error on a fresh draw from the design law."""
    a, b = _pair(beta_hat, truth.beta_true)
    d = np.ascontiguousarray(a - b)
    return float(d @ _kernels.ar1_matvec(d, float(truth.rho))) + truth.sigma**2


def estimator_label(k: int) -> str:
    return f"k={k}"


@dataclass(frozen=True)
class RunMetrics:
    run: int
    values: dict  # estimator -> {metric: value}
    lambdas: dict  # estimator -> chosen lambda(s)
    step_seconds: tuple = ()

    def get(self, estimator: str, metric: str) -> float:
        return self.values[estimator][metric]


def _metrics_for(beta_hat, truth: GroundTruth) -> dict:
    fp, fn = count_fp_fn(beta_hat, truth.beta_true)
    return {
        "squared_error": squared_error(beta_hat, truth.beta_true),
        "fp": fp,
        "fn": fn,
        "pred_error": analytic_prediction_error(beta_hat, truth),
        "support_size": int(np.count_nonzero(beta_hat)),
    }


def run_one(cfg: SimConfig, run: int) -> RunMetrics:
    """Generate instance ``run``, fit every estimator and score it."""
    train, val, truth = gen_instance(cfg, run)
    tune = TuneMethod.holdout(val, spacing=cfg.tuning_spacing)
    scfg = SolverConfig(grid_length=cfg.grid_length, grid_ratio=cfg.grid_ratio)
    try:
        trace = run_msa_lasso(train, tune, cfg.M, "adaptive", scfg)
    except InvariantError as exc:
        raise InvariantError(f"run {run}: {exc}") from exc
    except ConvergenceError as exc:
        raise ConvergenceError(f"run {run}: {exc}", exc.last_iterate, exc.residual) from exc
    values, lambdas = {}, {}
    for step in trace.steps:
        label = estimator_label(step.step)
        values[label] = _metrics_for(step.coefficients_raw.beta, truth)
        lambdas[label] = step.lambda_star
    for k in range(2, cfg.M + 1):
        cur, prev = values[estimator_label(k)], values[estimator_label(k - 1)]
        if cur["fp"] > prev["fp"] or cur["fn"] < prev["fn"]:
            raise InvariantError(
                f"run {run}: step {k} FP/FN not monotone "
                f"(fp {prev['fp']}->{cur['fp']}, fn {prev['fn']}->{cur['fn']})"
            )
    if cfg.include_two_stage_opt:
        res = run_two_stage_grid(train, tune, scfg, cfg.grid1_length, cfg.grid2_length)
        values[TWO_STAGE] = _metrics_for(res.coefficients.beta, truth)
        lambdas[TWO_STAGE] = res.lambda_pair
    return RunMetrics(run, values, lambdas, tuple(s.seconds for s in trace.steps))


@dataclass(frozen=True)
class SimRow:
    estimator: str
    metric: str
    rho: float
    p_act: int
    mean: float
    sd: float


@dataclass
class SimTable:
    rows: list = field(default_factory=list)
    configs: list = field(default_factory=list)
    runs_completed: int = 0
    run_metrics: list = field(default_factory=list)
    seconds: float = 0.0

    @classmethod
    def concat(cls, tables) -> "SimTable":
        out = cls()
        for t in tables:
            out.rows.extend(t.rows)
            out.configs.extend(t.configs)
            out.runs_completed += t.runs_completed
            out.run_metrics.extend(t.run_metrics)
            out.seconds += t.seconds
        return out

    def lookup(self, estimator: str, metric: str, rho: float, p_act: int) -> SimRow:
        for r in self.rows:
            if (r.estimator, r.metric, r.rho, r.p_act) == (estimator, metric, rho, p_act):
                return r
        raise KeyError((estimator, metric, rho, p_act))

    def column(self, estimator: str, metric: str) -> np.ndarray:
        """Per-run values of one (estimator, metric) in run order."""
        return np.array([m.get(estimator, metric) for m in self.run_metrics], dtype=float)


def aggregate(cfg: SimConfig, results: list) -> list[SimRow]:
    """Mean and sample SD (divisor runs - 1, zero for a single run) per cell."""
    estimators = [estimator_label(k) for k in range(1, cfg.M + 1)]
    if cfg.include_two_stage_opt:
        estimators.append(TWO_STAGE)
    rows = []
    for metric in METRICS:
        for est in estimators:
            vals = np.array([r.get(est, metric) for r in results], dtype=float)
            sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            rows.append(SimRow(est, metric, cfg.rho, cfg.p_act, float(np.mean(vals)), sd))
    return rows


def run_simulation(cfg: SimConfig, threads: int = 1, progress=None) -> SimTable:
    """Monte-Carlo study for one setting.

    Runs are independent and may execute on ``threads`` workers; results are
    reduced in run order, so the table does not depend on the worker count.
    ``progress`` is called with each finished run index, in order.
    """
    cfg.validate()
    started = time.perf_counter()
    threads = max(1, int(threads))
    runs = range(cfg.runs)
    if threads == 1:
        results = []
        for r in runs:
            results.append(run_one(cfg, r))
            if progress:
                progress(r)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = []
            for res in pool.map(lambda r: run_one(cfg, r), runs):
                results.append(res)
                if progress:
                    progress(res.run)
    return SimTable(
        rows=aggregate(cfg, results),
        configs=[cfg],
        runs_completed=len(results),
        run_metrics=results,
        seconds=time.perf_counter() - started,
    )


def format_2dp(x: float) -> str:
    """Two decimals, halves rounded away from zero."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _setting_label(rho: float, p_act: int) -> str:
    return f"rho={rho:g}, p_act={p_act}"


def emit_table(t: SimTable, fmt: str = "markdown") -> str:
    """Render a table as ``"markdown"`` (mean (sd), two decimals) or ``"csv"``."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in t.rows:
            buf.write(f"{r.estimator},{r.metric},{r.rho!r},{r.p_act},{r.mean!r},{r.sd!r}\n")
        return buf.getvalue()
    if fmt != "markdown":
        raise ConfigError(f"unknown table format {fmt!r}; use 'markdown' or 'csv'", ["format"])

    settings, keys = [], []
    cells = {}
    for r in t.rows:
        s = (r.rho, r.p_act)
        if s not in settings:
            settings.append(s)
        k = (r.metric, r.estimator)
        if k not in keys:
            keys.append(k)
        cells[k + s] = f"{format_2dp(r.mean)} ({format_2dp(r.sd)})"
    head = ["metric", "estimator"] + [_setting_label(*s) for s in settings]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for k in keys:
        row = list(k) + [cells.get(k + s, "") for s in settings]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def timing_summary(t: SimTable) -> str:
    """Wall-clock plus mean seconds per MSA step, for the CLI's stderr report."""
    lines = [f"wall-clock: {t.seconds:.2f} s over {t.runs_completed} runs"]
    if t.run_metrics:
        per = np.array([m.step_seconds for m in t.run_metrics if m.step_seconds], dtype=float)
        if per.size:
            for k, s in enumerate(per.mean(axis=0), 1):
                lines.append(f"step k={k}: mean {s * 1e3:.1f} ms")
    return "\n".join(lines) + "\n"
