"""Multi-step adaptive Lasso driver.

Step 1 is an ordinary Lasso (uniform weights). Every later step refits a
weighted Lasso whose weights come from the previous step's tuned
estimate, with its own lambda grid and its own prediction-optimal lambda.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    Coefficients,
    ConfigError,
    DataError,
    Dataset,
    InvariantError,
    LambdaGrid,
    Support,
    WeightVector,
    destandardize_coefficients,
    standardize,
    support_of,
)
from .solver import PathResult, SolverConfig, fraction_grid, solve_on_grid, solve_path
from .weights import SCAD_A, WeightRule, mle_init_weights, uniform_weights


SPACINGS = ("lambda", "l1_fraction")


@dataclass(frozen=True, eq=False)
class TuneMethod:
    """How lambda is tuned: a separate validation set, or K-fold CV on the training data.

    ``spacing`` sets the candidates: ``"lambda"`` uses the path's own
    geometric grid; ``"l1_fraction"`` re-solves at lambdas whose weighted L1
    norms are evenly spaced between the ends of the path.
    """

    kind: str = "holdout"
    validation: Optional[Dataset] = None
    k: int = 5
    seed: int = 0
    spacing: str = "lambda"

    def __post_init__(self):
        if self.spacing not in SPACINGS:
            raise ConfigError(
                f"unknown grid spacing {self.spacing!r}; expected one of {', '.join(SPACINGS)}",
                ["spacing"],
            )
        if self.kind == "holdout":
            if self.validation is None:
                raise ConfigError("holdout tuning needs a validation dataset", ["validation"])
        elif self.kind == "kfold":
            if int(self.k) < 2:
                raise ConfigError(f"K-fold tuning needs K >= 2, got {self.k}", ["k"])
        else:
            raise ConfigError(f"unknown tuning method {self.kind!r}", ["tune"])

    @classmethod
    def holdout(cls, validation: Dataset, spacing: str = "lambda") -> "TuneMethod":
        return cls("holdout", validation=validation, spacing=spacing)

    @classmethod
    def kfold(cls, k: int = 5, seed: int = 0, spacing: str = "lambda") -> "TuneMethod":
        return cls("kfold", k=k, seed=seed, spacing=spacing)

    def check(self, train: Dataset) -> None:
        if self.kind == "holdout":
            if self.validation.p != train.p:
                raise DataError(
                    f"validation set has p={self.validation.p}, training set has p={train.p}"
                )
        elif self.k > train.n:
            raise ConfigError(f"K={self.k} exceeds the {train.n} training rows", ["k"])

    def folds(self, n: int) -> list[np.ndarray]:
        perm = np.random.default_rng(self.seed).permutation(n)
        return [np.sort(perm[i :: self.k]) for i in range(self.k)]


@dataclass(frozen=True, eq=False)
class StepResult:
    step: int
    weights: WeightVector
    path: Optional[PathResult]
    lambda_star: float
    coefficients: Coefficients  # standardized scale
    coefficients_raw: Coefficients  # original scale, with intercept
    support: Support
    validation_loss: float
    seconds: float = 0.0


@dataclass(frozen=True, eq=False)
class StepTrace:
    steps: list
    n: int
    p: int
    rule: str = "adaptive"

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, k: int) -> StepResult:
        """Step ``k`` counted from 1, as in the algorithm."""
        if not 1 <= k <= len(self.steps):
            raise IndexError(f"step {k} outside 1..{len(self.steps)}")
        return self.steps[k - 1]

    def supports(self) -> list[Support]:
        return [s.support for s in self.steps]

    def check_invariants(self, nested: Optional[bool] = None) -> None:
        """Raise ``InvariantError`` on a sparsity-bound or nesting violation.

        Nesting is only implied by rules that exclude zeroed coordinates, so
        by default it is skipped for SCAD weights.
        """
        if nested is None:
            nested = self.rule != "scad_lla"
        bound = min(self.n, self.p)
        for s in self.steps:
            if len(s.support) > bound:
                raise InvariantError(
                    f"step {s.step}: support size {len(s.support)} exceeds min(n, p) = {bound}"
                )
        if nested:
            for prev, cur in zip(self.steps, self.steps[1:]):
                if not cur.support.issubset(prev.support):
                    extra = sorted(cur.support.as_set() - prev.support.as_set())
                    raise InvariantError(
                        f"step {cur.step}: support not nested in step {prev.step}; "
                        f"new indices {extra}"
                    )


def _recenter(d: Dataset) -> Dataset:
    """Center rows of already-scaled data, recording unit scales."""
    xc = d.x.mean(axis=0)
    yc = float(d.y.mean())
    return Dataset(d.x - xc, d.y - yc, d.column_names, xc, np.ones(d.p), yc)


def _mse(coefs: list, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    b = np.vstack([c.beta for c in coefs])
    icpt = np.array([c.intercept for c in coefs])
    resid = y[:, None] - (x @ b.T + icpt)
    return np.mean(resid * resid, axis=0)


def _holdout_losses(coefs_std: list, train: Dataset, val: Dataset) -> np.ndarray:
    raw = [destandardize_coefficients(c, train) for c in coefs_std]
    return _mse(raw, val.x, val.y)


def _cv_losses(train: Dataset, tune: TuneMethod, fit: Callable[[Dataset], list]) -> np.ndarray:
    """Mean held-out MSE per candidate; ``fit`` maps a fold dataset to candidate fits."""
    total = None
    for held in tune.folds(train.n):
        mask = np.ones(train.n, dtype=bool)
        mask[held] = False
        fold = _recenter(Dataset(train.x[mask], train.y[mask]))
        coefs = [destandardize_coefficients(c, fold) for c in fit(fold)]
        losses = _mse(coefs, train.x[held], train.y[held])
        total = losses if total is None else total + losses
    return total / tune.k


def _argmin_first(losses: np.ndarray) -> int:
    """Index of the smallest loss; the first (largest-lambda) index wins ties."""
    return int(np.argmin(losses))


def select_lambda(path: PathResult, tune: TuneMethod, train: Dataset):
    """Prediction-optimal grid point of ``path``.

    Returns ``(lambda_star, coefficients, validation_loss)`` where the
    coefficients are on the standardized scale of ``train``.
    """
    if not train.standardized:
        raise DataError("select_lambda expects the standardized training data")
    tune.check(train)
    if len(path) == 0:
        raise DataError("empty path")
    if tune.spacing == "l1_fraction" and path.weights is not None:
        path = solve_on_grid(train, path.weights, fraction_grid(path), path.config)
    if tune.kind == "holdout":
        losses = _holdout_losses(path.coefficients, train, tune.validation)
    else:
        losses = _cv_losses(
            train,
            tune,
            lambda fold: solve_on_grid(fold, path.weights, path.grid, path.config).coefficients,
        )
    i = _argmin_first(losses)
    return float(path.lambdas[i]), path.coefficients[i], float(losses[i])


def _constant_fit_loss(train: Dataset, tune: TuneMethod, coef: Coefficients) -> float:
    if tune.kind == "holdout":
        return float(_holdout_losses([coef], train, tune.validation)[0])
    return float(_cv_losses(train, tune, lambda fold: [Coefficients.zeros(fold.p)])[0])


def _least_squares_fit(train: Dataset, tune: TuneMethod, w: WeightVector) -> tuple:
    """Unpenalized fit on the non-excluded columns (all finite weights are zero)."""
    keep = np.flatnonzero(w.finite)
    if keep.size > train.n:
        raise DataError(
            f"MLE initialization requires n >= p (n={train.n}, free columns={keep.size})"
        )

    def fit(d: Dataset) -> list:
        beta = np.zeros(d.p)
        beta[keep], *_ = np.linalg.lstsq(d.x[:, keep], d.y, rcond=None)
        return [Coefficients(beta)]

    coef = fit(train)[0]
    if tune.kind == "holdout":
        loss = float(_holdout_losses([coef], train, tune.validation)[0])
    else:
        loss = float(_cv_losses(train, tune, fit)[0])
    return coef, loss


def _as_rule(rule) -> tuple[str, WeightRule]:
    """Split a rule name into (initialization, update rule)."""
    if isinstance(rule, WeightRule):
        return "uniform", rule
    if rule == "mle":
        return "mle", WeightRule("adaptive")
    return "uniform", WeightRule(rule)


def run_msa_lasso(
    train: Dataset,
    tune: TuneMethod,
    M: int = 3,
    rule="adaptive",
    cfg: Optional[SolverConfig] = None,
    scad_a: float = SCAD_A,
    check: bool = True,
) -> StepTrace:
    """Run ``M`` steps of the multi-step adaptive Lasso.

    ``rule`` picks the weight update between steps: ``"adaptive"``
    (reciprocal magnitudes), ``"scad"`` (SCAD local linear approximation at
    the previous step's lambda), ``"uniform"`` (plain Lasso every step) or
    ``"mle"`` (adaptive updates, but step 1 is an unpenalized
    least-squares fit, which needs n >= p).
    """
    if int(M) < 1:
        raise ConfigError(f"number of steps must be >= 1, got {M}", ["M"])
    cfg = cfg or SolverConfig()
    init, update = _as_rule(rule)
    if update.kind == "scad_lla" and update.a != scad_a:
        update = dataclasses.replace(update, a=scad_a)
    std = standardize(train)
    tune.check(std)
    if init == "mle":
        if std.p > std.n:
            raise DataError(f"MLE initialization requires n >= p (n={std.n}, p={std.p})")
        w = mle_init_weights(std.p)
    else:
        w = uniform_weights(std.p)

    steps = []
    prev: Optional[StepResult] = None
    for k in range(1, int(M) + 1):
        started = time.perf_counter()
        if k > 1:
            if not np.any(prev.coefficients.beta):
                w = WeightVector(np.full(std.p, np.inf))
            else:
                w = update(prev.coefficients, prev.lambda_star)
        path = None
        if w.empty:
            coef = Coefficients.zeros(std.p)
            lam = float("inf")
            loss = _constant_fit_loss(std, tune, coef)
        elif np.all(w.w[w.finite] == 0):
            coef, loss = _least_squares_fit(std, tune, w)
            lam = 0.0
        else:
            path = solve_path(std, w, cfg)
            lam, coef, loss = select_lambda(path, tune, std)
        prev = StepResult(
            step=k,
            weights=w,
            path=path,
            lambda_star=lam,
            coefficients=coef,
            coefficients_raw=destandardize_coefficients(coef, std),
            support=support_of(coef),
            validation_loss=loss,
            seconds=time.perf_counter() - started,
        )
        steps.append(prev)
    trace = StepTrace(steps, std.n, std.p, update.kind)
    if check:
        trace.check_invariants()
    return trace


@dataclass(frozen=True, eq=False)
class TwoStageResult:
    coefficients: Coefficients  # original scale
    coefficients_std: Coefficients
    lambda_pair: tuple
    validation_loss: float
    support: Support = field(default_factory=Support)


def run_two_stage_grid(
    train: Dataset,
    tune: TuneMethod,
    cfg: Optional[SolverConfig] = None,
    grid1_length: int = 50,
    grid2_length: int = 50,
    lambda1_values=None,
) -> TwoStageResult:
    """Adaptive Lasso tuned jointly over (initial lambda, adaptive lambda).

    Every point of the initial Lasso grid seeds its own adaptive-weight
    path; the pair with the smallest validation error wins, ties going to
    the larger initial lambda and then the larger adaptive lambda. Passing
    ``lambda1_values`` replaces the initial grid.
    """
    cfg = cfg or SolverConfig()
    if tune.kind != "holdout":
        raise ConfigError("the two-stage grid search supports holdout tuning only", ["tune"])
    std = standardize(train)
    tune.check(std)
    val = tune.validation
    u = uniform_weights(std.p)
    if lambda1_values is not None:
        stage1 = solve_on_grid(std, u, LambdaGrid(np.atleast_1d(lambda1_values)), cfg)
    else:
        stage1 = solve_path(std, u, dataclasses.replace(cfg, grid_length=int(grid1_length)))
    cfg2 = dataclasses.replace(cfg, grid_length=int(grid2_length))

    best = None
    for lam1, first in zip(stage1.lambdas, stage1.coefficients):
        if not np.any(first.beta):
            cands, lams2 = [Coefficients.zeros(std.p)], [float("inf")]
        else:
            w = WeightRule("adaptive")(first)
            path = solve_path(std, w, cfg2)
            cands, lams2 = path.coefficients, list(path.lambdas)
        losses = _holdout_losses(cands, std, val)
        i = _argmin_first(losses)
        if best is None or losses[i] < best[0]:
            best = (float(losses[i]), float(lam1), float(lams2[i]), cands[i])
    loss, lam1, lam2, coef = best
    return TwoStageResult(
        coefficients=destandardize_coefficients(coef, std),
        coefficients_std=coef,
        lambda_pair=(lam1, lam2),
        validation_loss=loss,
        support=support_of(coef),
    )
