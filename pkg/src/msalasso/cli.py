"""Command-line front end: ``msalasso fit | simulate | path``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import _kernels
from .core import (
    ConfigError,
    ConvergenceError,
    DataError,
    Dataset,
    InvariantError,
    MSALassoError,
    destandardize_coefficients,
    standardize,
)
from .metrics import SimTable, emit_table, run_simulation, timing_summary
from .msa import SPACINGS, TuneMethod, run_msa_lasso
from .simgen import SimConfig, parse_key_values
from .solver import SolverConfig, solve_path
from .weights import RULE_NAMES, WeightRule, uniform_weights

log = logging.getLogger("msalasso")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
INTERCEPT = "(intercept)"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ input


def read_csv_dataset(path, response_column: str) -> Dataset:
    """Load a headed, comma-separated numeric file into a Dataset."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file (no header row)") from None
        if response_column not in header:
            raise DataError(
                f"{path}: response column {response_column!r} not found; "
                f"available columns: {', '.join(header)}"
            )
        resp = header.index(response_column)
        rows = []
        for rowno, fields in enumerate(reader, 1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise DataError(
                    f"{path}: row {rowno} (line {reader.line_num}) has {len(fields)} "
                    f"fields, expected {len(header)}"
                )
            vals = []
            for col, raw in zip(header, fields):
                try:
                    v = float(raw)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: row {rowno} (line {reader.line_num}), column {col!r}: "
                        f"invalid numeric value {raw!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    arr = np.array(rows)
    names = [h for i, h in enumerate(header) if i != resp]
    if not names:
        raise DataError(f"{path}: no predictor columns besides {response_column!r}")
    return Dataset(np.delete(arr, resp, axis=1), arr[:, resp], names)


def parse_tune(spec: str):
    """``holdout:<fraction>`` -> ("holdout", fraction); ``cv:<K>`` -> ("cv", K)."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "holdout":
            frac = float(arg)
            if not 0.0 < frac < 1.0:
                raise ValueError
            return "holdout", frac
        if kind == "cv":
            k = int(arg)
            if k < 2:
                raise ValueError
            return "cv", k
    except ValueError:
        pass
    raise ConfigError(f"bad tune spec {spec!r}; use 'holdout:<fraction in (0,1)>' or 'cv:<K>=2..>'", ["tune"])


def holdout_split(n: int, fraction: float, seed: int):
    """Seeded permutation; the last ceil(fraction * n) rows validate."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = math.ceil(fraction * n)
    if n_val < 2 or n - n_val < 2:
        raise ConfigError(
            f"validation split too small: fraction {fraction} of n={n} gives "
            f"{n_val} validation and {n - n_val} training rows (need >= 2 each)",
            ["tune"],
        )
    return np.sort(perm[: n - n_val]), np.sort(perm[n - n_val :])


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("MSALASSO_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MSALASSO_THREADS must be an integer, got {env!r}", ["threads"])
    return 1


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        tol=args.tol, max_iters=args.max_iters, grid_length=args.grid_length, grid_ratio=args.grid_ratio
    )


def _prepare(data: Dataset, args):
    """Split or wrap the data according to ``--tune``; returns (train, tune, meta)."""
    kind, val = parse_tune(args.tune)
    spacing = getattr(args, "spacing", "lambda")
    meta = {"tune": args.tune, "spacing": spacing, "seed": args.seed}
    if kind == "holdout":
        tr, va = holdout_split(data.n, val, args.seed)
        meta["validation_rows"] = ",".join(str(i + 1) for i in va)
        return data.subset(tr), TuneMethod.holdout(data.subset(va), spacing), meta
    if val > data.n:
        raise ConfigError(f"cv:{val} needs at least {val} rows, have {data.n}", ["tune"])
    return data, TuneMethod.kfold(val, args.seed, spacing), meta


# ----------------------------------------------------------------- output


class _AtomicOutputs:
    """Collect output files in temporaries; rename into place only on commit."""

    def __init__(self):
        self._pending = []

    def open(self, target):
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        fh = os.fdopen(fd, "w", encoding="utf-8", newline="\n")
        self._pending.append((fh, tmp, target))
        return fh

    def commit(self):
        for fh, _, _ in self._pending:
            fh.close()
        for _, tmp, target in self._pending:
            os.replace(tmp, target)
        self._pending = []

    def abort(self):
        for fh, tmp, _ in self._pending:
            fh.close()
            if os.path.exists(tmp):
                os.unlink(tmp)
        self._pending = []


def _emit(out: _AtomicOutputs, target: str, text: str):
    if target == "-":
        sys.stdout.write(text)
    else:
        out.open(target).write(text)


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------- commands


def cmd_fit(args, out: _AtomicOutputs) -> int:
    data = read_csv_dataset(args.data, args.response)
    train, tune, meta = _prepare(data, args)
    trace = run_msa_lasso(train, tune, args.steps, args.weights, _solver_config(args), args.scad_a)
    names = data.names()
    coef_lines = ["step,column,coefficient"]
    step_lines = ["step,lambda,support_size,validation_loss"]
    for s in trace.steps:
        raw = s.coefficients_raw
        coef_lines.append(f"{s.step},{INTERCEPT},{_fmt(raw.intercept)}")
        coef_lines.extend(f"{s.step},{nm},{_fmt(b)}" for nm, b in zip(names, raw.beta))
        step_lines.append(f"{s.step},{_fmt(s.lambda_star)},{len(s.support)},{_fmt(s.validation_loss)}")
    _emit(out, args.output, "\n".join(coef_lines) + "\n")
    if args.output != "-":
        meta.update(
            data=str(args.data), response=args.response, weights=args.weights, steps=args.steps,
            n_train=train.n, backend=_backend(),
        )
        _emit(out, f"{args.output}.steps.csv", "\n".join(step_lines) + "\n")
        _emit(out, f"{args.output}.meta", "".join(f"{k} = {v}\n" for k, v in meta.items()))
    else:
        sys.stdout.write("\n".join(step_lines) + "\n")
    return EXIT_OK


def load_campaign(text: str, seed=None) -> list[SimConfig]:
    """Parse a config file; ``rho`` and ``p_act`` may hold comma-separated lists."""
    values = parse_key_values(text)
    rhos = [v.strip() for v in values.pop("rho", repr(SimConfig.rho)).split(",")]
    pacts = [v.strip() for v in values.pop("p_act", str(SimConfig.p_act)).split(",")]
    if seed is not None:
        values["seed"] = str(seed)
    configs, bad = [], []
    for pa in pacts:
        for rho in rhos:
            try:
                cfg = SimConfig.from_mapping({**values, "p_act": pa, "rho": rho})
            except ConfigError as exc:
                bad.extend(f for f in exc.fields if f not in bad)
                continue
            bad.extend(f for f in cfg.problems() if f not in bad)
            configs.append(cfg)
    if bad:
        raise ConfigError(f"invalid simulation config: {', '.join(bad)}", bad)
    return configs


def cmd_simulate(args, out: _AtomicOutputs) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.is_file():
        raise ConfigError(f"config file not found: {cfg_path}", ["config"])
    configs = load_campaign(cfg_path.read_text(encoding="utf-8"), args.seed)
    threads = _threads(args)
    tables = []
    for cfg in configs:
        log.info("simulating rho=%g p_act=%d (%d runs, %d threads)", cfg.rho, cfg.p_act, cfg.runs, threads)
        tables.append(run_simulation(cfg, threads=threads))
    table = SimTable.concat(tables)
    _emit(out, args.output, emit_table(table, args.format))
    sys.stderr.write(timing_summary(table))
    return EXIT_OK


def cmd_path(args, out: _AtomicOutputs) -> int:
    data = read_csv_dataset(args.data, args.response)
    cfg = _solver_config(args)
    std = standardize(data)
    rule = WeightRule(args.weights)
    if rule.kind == "mle_init":
        raise ConfigError("the path command supports uniform, adaptive or scad weights", ["weights"])
    if rule.kind == "uniform":
        w = uniform_weights(std.p)
    else:
        # weights come from a tuned plain Lasso fit on the same data
        train, tune, _ = _prepare(data, args)
        first = run_msa_lasso(train, tune, 1, "uniform", cfg)[1]
        w = WeightRule(args.weights, a=args.scad_a)(first.coefficients, first.lambda_star)
    path = solve_path(std, w, cfg)
    names = data.names()
    lines = ["lambda,column,coefficient"]
    for lam, c in zip(path.lambdas, path.coefficients):
        raw = destandardize_coefficients(c, std)
        for j in np.flatnonzero(raw.beta):
            lines.append(f"{_fmt(lam)},{names[j]},{_fmt(raw.beta[j])}")
    _emit(out, args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _backend() -> str:
    return _kernels.BACKEND


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="msalasso", description="Multi-step adaptive Lasso fits and simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", "-o", required=True, help="output path, '-' for stdout")
        p.add_argument("--threads", type=int, default=None, help="worker cap (env MSALASSO_THREADS)")

    def solver_opts(p):
        d = SolverConfig()
        p.add_argument("--tol", type=float, default=d.tol)
        p.add_argument("--max-iters", type=int, default=d.max_iters)
        p.add_argument("--grid-length", type=int, default=d.grid_length)
        p.add_argument("--grid-ratio", type=float, default=d.grid_ratio)

    fit = sub.add_parser("fit", help="run the multi-step adaptive Lasso on a CSV file")
    fit.add_argument("--data", required=True)
    fit.add_argument("--response", required=True)
    fit.add_argument("--steps", "-M", type=int, default=3, help="number of MSA steps")
    fit.add_argument("--weights", choices=sorted(RULE_NAMES), default="adaptive")
    fit.add_argument("--scad-a", type=float, default=3.7)
    fit.add_argument("--tune", default="holdout:0.33", help="holdout:<fraction> or cv:<K>")
    fit.add_argument("--spacing", choices=SPACINGS, default="lambda", help="candidate lambdas for tuning")
    common(fit)
    solver_opts(fit)

    sim = sub.add_parser("simulate", help="Monte-Carlo study from a key = value config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--format", choices=("csv", "markdown"), default="csv")
    common(sim)

    path = sub.add_parser("path", help="write the regularization path of a CSV file")
    path.add_argument("--data", required=True)
    path.add_argument("--response", required=True)
    path.add_argument("--weights", choices=("uniform", "adaptive", "scad"), default="uniform")
    path.add_argument("--scad-a", type=float, default=3.7)
    path.add_argument("--tune", default="cv:5", help="tuning for the initial fit of adaptive/scad weights")
    common(path)
    solver_opts(path)
    return parser


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "path": cmd_path}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command != "simulate" and args.seed is None:
        args.seed = 0
    out = _AtomicOutputs()
    try:
        status = COMMANDS[args.command](args, out)
        out.commit()
        return status
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except (DataError, OSError) as exc:
        code, msg = EXIT_DATA, f"data error: {exc}"
    except (ConvergenceError, InvariantError, MSALassoError, FloatingPointError, np.linalg.LinAlgError) as exc:
        code, msg = EXIT_NUMERIC, f"numerical failure: {exc}"
    out.abort()
    sys.stderr.write(f"msalasso {args.command}: {msg}\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
