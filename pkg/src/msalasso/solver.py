"""Weighted-Lasso solver.

Minimizes ``0.5 * ||y - X b||^2 + n * lam * sum_j w_j |b_j|`` on centered
(standardized) data by cyclic coordinate descent with an active-set
schedule, and traces solutions along a geometric lambda grid with warm
starts. Columns with infinite weight are dropped from the working design,
so they are exactly zero in every solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .core import (
    Coefficients,
    ConfigError,
    ConvergenceError,
    DataError,
    Dataset,
    LambdaGrid,
    WeightVector,
)

# Every returned solution must certify optimality to this level.
KKT_TOL = 1e-6
# How many times the coefficient tolerance is tightened (x0.01 each) when a
# converged iterate still misses the KKT certificate.
_MAX_REFINEMENTS = 6
# Sweeps between attempts to polish the iterate by an exact active-set solve.
_CHUNK_SWEEPS = 50


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 100_000
    grid_length: int = 100
    grid_ratio: float = 1e-3

    def __post_init__(self):
        bad = []
        if not self.tol > 0:
            bad.append("tol")
        if int(self.max_iters) < 1:
            bad.append("max_iters")
        if int(self.grid_length) < 2:
            bad.append("grid_length")
        if not (0.0 < self.grid_ratio < 1.0):
            bad.append("grid_ratio")
        if bad:
            raise ConfigError(f"invalid solver settings: {', '.join(bad)}", bad)


@dataclass(frozen=True, eq=False)
class PathResult:
    grid: LambdaGrid
    coefficients: list
    iterations: list
    weights: Optional[WeightVector] = None
    config: SolverConfig = field(default_factory=SolverConfig)

    def __len__(self) -> int:
        return len(self.coefficients)

    @property
    def lambdas(self) -> np.ndarray:
        return self.grid.values

    def beta_matrix(self) -> np.ndarray:
        """Coefficients stacked as a (len(grid), p) array."""
        return np.vstack([c.beta for c in self.coefficients])


def _check_dims(d: Dataset, w: WeightVector) -> None:
    if w.p != d.p:
        raise DataError(f"weight vector has length {w.p}, dataset has p={d.p}")


def objective(d: Dataset, w: WeightVector, lam: float, c: Coefficients) -> float:
    """Weighted-Lasso objective value; +inf if an excluded coordinate is nonzero."""
    _check_dims(d, w)
    beta = c.beta
    resid = d.y - d.x @ beta - c.intercept
    nz = beta != 0.0
    if np.any(~np.isfinite(w.w[nz])):
        return float("inf")
    pen = float(np.sum(w.w[nz] * np.abs(beta[nz])))
    return 0.5 * float(resid @ resid) + d.n * lam * pen


def compute_lambda_max(d: Dataset, w: WeightVector) -> float:
    """Smallest lambda at which the all-zero vector solves the weighted problem.

    Excluded (infinite-weight) coordinates are ignored. Zero weights are
    rejected because they need the unpenalized projection that
    :func:`solve_path` performs internally.
    """
    _check_dims(d, w)
    keep = w.finite
    if not np.any(keep):
        raise DataError("empty model: every coordinate has infinite weight")
    wk = w.w[keep]
    if np.any(wk == 0):
        raise DataError("unpenalized coordinate requires projection")
    g = np.abs(d.x[:, keep].T @ d.y)
    return float(np.max(g / (d.n * wk)))


def kkt_residual(d: Dataset, w: WeightVector, lam: float, c: Coefficients) -> float:
    """Largest violation of the subgradient optimality conditions at ``c``."""
    _check_dims(d, w)
    beta = c.beta
    r = d.y - d.x @ beta - c.intercept
    g = d.x.T @ r
    finite = w.finite
    nz = beta != 0.0
    if np.any(nz & ~finite):
        return float("inf")
    pen = d.n * lam * np.where(finite, w.w, 0.0)
    on = nz & finite
    off = ~nz & finite
    worst = 0.0
    if np.any(on):
        worst = max(worst, float(np.max(np.abs(g[on] - pen[on] * np.sign(beta[on])))))
    if np.any(off):
        worst = max(worst, float(np.max(np.maximum(0.0, np.abs(g[off]) - pen[off]))))
    return worst


class _Problem:
    """A dataset/weight pair reduced to the columns that can enter the model."""

    def __init__(self, d: Dataset, w: WeightVector):
        _check_dims(d, w)
        if w.empty:
            raise DataError("empty model: every coordinate has infinite weight")
        self.d = d
        self.w = w
        self.keep = np.flatnonzero(w.finite)
        self.x = np.asfortranarray(d.x[:, self.keep])
        self.y = np.ascontiguousarray(d.y)
        self.col_sq = np.einsum("ij,ij->j", self.x, self.x)
        self.wk = np.ascontiguousarray(w.w[self.keep])
        self.n = d.n

    def expand(self, beta_k: np.ndarray) -> Coefficients:
        beta = np.zeros(self.d.p)
        beta[self.keep] = beta_k
        return Coefficients(beta)

    def lambda_max(self) -> tuple[float, np.ndarray]:
        """lambda_max and the solution there (nonzero only if some w_j == 0)."""
        free = self.wk == 0
        start = np.zeros(self.keep.size)
        if not np.any(free):
            g = np.abs(self.x.T @ self.y)
            return float(np.max(g / (self.n * self.wk))), start
        if np.all(free):
            raise DataError("no penalized coordinates: the path is a single least-squares fit")
        sol, *_ = np.linalg.lstsq(self.x[:, free], self.y, rcond=None)
        start[free] = sol
        r0 = self.y - self.x[:, free] @ sol
        g = np.abs(self.x[:, ~free].T @ r0)
        return float(np.max(g / (self.n * self.wk[~free]))), start

    def zero_is_optimal(self, lam: float) -> bool:
        if np.any(self.wk == 0):
            return False
        g = np.abs(self.x.T @ self.y)
        return bool(lam >= np.max(g / (self.n * self.wk)))

    def _objective(self, b: np.ndarray, pen: np.ndarray) -> float:
        r = self.y - self.x @ b
        return 0.5 * float(r @ r) + float(pen @ np.abs(b))

    def polish(self, beta: np.ndarray, pen: np.ndarray) -> Optional[np.ndarray]:
        """Exact minimizer over the current support, reached by descent.

        With the support A and signs s fixed, the objective is a quadratic
        minimized by ``X_A' X_A b = X_A' y - pen_A * s``. If that point flips
        a sign, move toward it only until the first coefficient reaches zero,
        drop that coordinate and re-solve. If the active columns are
        rank-deficient, first slide along a null direction of ``X_A`` (fit
        unchanged, penalty non-increasing) until a coordinate vanishes.
        Returns None if the result would not lower the objective.
        """
        b = np.array(beta)
        start = self._objective(b, pen)
        for _ in range(2 * self.keep.size + 1):
            act = np.flatnonzero(b)
            if act.size == 0:
                return None
            xa = self.x[:, act]
            sign = np.sign(b[act])
            cur = b[act]
            rhs = xa.T @ self.y - pen[act] * sign
            target = _full_rank_solve(xa, rhs) if act.size < self.n - 1 else None
            if target is None:
                _, sv, vt = np.linalg.svd(xa, full_matrices=False)
                rank = int(np.sum(sv > sv[0] * max(xa.shape) * 1e-12))
                if rank == act.size:
                    target = vt.T @ ((vt @ rhs) / (sv * sv))
            if target is None:
                d = vt[-1] if vt.shape[0] == act.size else _null_vector(xa)
                if pen[act] @ (sign * d) > 0:
                    d = -d
                shrink = (cur * d < 0) & (pen[act] > 0)
                if not np.any(shrink):
                    d = -d
                    shrink = (cur * d < 0) & (pen[act] > 0)
                    if not np.any(shrink):
                        return None
                step = -cur[shrink] / d[shrink]
                k = int(np.argmin(step))
                b[act] = cur + step[k] * d
                b[act[np.flatnonzero(shrink)[k]]] = 0.0
                continue
            flips = (pen[act] > 0) & (np.sign(target) != sign)
            if not np.any(flips):
                b[act] = target
                break
            step = cur[flips] / (cur[flips] - target[flips])
            k = int(np.argmin(step))
            b[act] = cur + step[k] * (target - cur)
            b[act[np.flatnonzero(flips)[k]]] = 0.0
        else:
            return None
        if not np.all(np.isfinite(b)) or self._objective(b, pen) > start:
            return None
        return b

    def sparsify(self, beta: np.ndarray, pen: np.ndarray) -> np.ndarray:
        """Shrink the support until its columns are linearly independent.

        Once the active columns are dependent the minimizer is not unique.
        Moving along a null direction of ``X_A`` leaves the residual alone,
        and oriented so the penalty does not grow it stays within the
        solution set; stopping where the first coefficient reaches zero
        drops one coordinate.
        """
        b = np.array(beta)
        while True:
            act = np.flatnonzero(b)
            if act.size < self.n - 1:
                return b
            xa = self.x[:, act]
            _, sv, vt = np.linalg.svd(xa, full_matrices=act.size > self.n)
            rank = int(np.sum(sv > sv[0] * max(xa.shape) * 1e-12))
            if rank == act.size:
                return b
            d = vt[-1]
            cur = b[act]
            if pen[act] @ (np.sign(cur) * d) > 0:
                d = -d
            shrink = cur * d < 0
            if not np.any(shrink):
                d = -d
                shrink = cur * d < 0
            step = -cur[shrink] / d[shrink]
            k = int(np.argmin(step))
            b[act] = cur + step[k] * d
            b[act[np.flatnonzero(shrink)[k]]] = 0.0

    def solve(self, lam: float, beta0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, int]:
        """Coordinate descent in chunks, with an exact polish between chunks.

        Returns only once a full sweep moves no coordinate by more than the
        tolerance and the KKT residual is below ``KKT_TOL``. Large supports
        are then reduced to linearly independent columns.
        """
        if not np.any(beta0) and self.zero_is_optimal(lam):
            return np.zeros(self.keep.size), 0
        beta = np.array(beta0, dtype=float)
        pen = self.n * lam * self.wk
        tol = cfg.tol
        refinements = 0
        used = 0
        while True:
            chunk = min(_CHUNK_SWEEPS, cfg.max_iters - used)
            r = self.y - self.x @ beta
            sweeps, converged = _kernels.cd_solve(self.x, r, beta, self.col_sq, pen, tol, chunk)
            used += int(sweeps)
            if converged:
                residual = kkt_residual(self.d, self.w, lam, self.expand(beta))
                if residual <= KKT_TOL:
                    if np.count_nonzero(beta) < self.n - 1:
                        return beta, used
                    sparse = self.sparsify(beta, pen)
                    if kkt_residual(self.d, self.w, lam, self.expand(sparse)) <= KKT_TOL:
                        return sparse, used
                    # dropping coordinates disturbed the certificate: keep descending
                    beta = sparse
                refinements += 1
                if refinements > _MAX_REFINEMENTS:
                    raise ConvergenceError(
                        f"KKT residual {residual:.3g} above {KKT_TOL} at lambda={lam:.6g} "
                        "after tightening the tolerance",
                        self.expand(beta).beta,
                        residual,
                    )
                tol *= 1e-2
            if used >= cfg.max_iters:
                residual = kkt_residual(self.d, self.w, lam, self.expand(beta))
                raise ConvergenceError(
                    f"coordinate descent did not converge in {cfg.max_iters} sweeps "
                    f"at lambda={lam:.6g} (KKT residual {residual:.3g})",
                    self.expand(beta).beta,
                    residual,
                )
            polished = self.polish(beta, pen)
            if polished is not None:
                beta = polished


def _full_rank_solve(xa: np.ndarray, rhs: np.ndarray) -> Optional[np.ndarray]:
    """Solve ``xa' xa b = rhs`` by Cholesky; None if the Gram matrix is near singular."""
    g = xa.T @ xa
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(chol)
    if diag.min() ** 2 <= 1e-12 * np.max(np.diag(g)):
        return None
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


def _null_vector(a: np.ndarray) -> np.ndarray:
    """Unit vector v with a @ v ~ 0 for a matrix with more columns than rows."""
    _, _, vt = np.linalg.svd(a, full_matrices=True)
    return vt[-1]


def solve(
    d: Dataset,
    w: WeightVector,
    lam: float,
    init: Optional[Coefficients] = None,
    cfg: Optional[SolverConfig] = None,
) -> Coefficients:
    """Solve the weighted Lasso at a single ``lam``.

    Parameters
    ----------
    d : Dataset
        Centered data (typically the output of ``standardize``).
    w : WeightVector
        Penalty weights; infinite entries exclude a column.
    lam : float
        Penalty level, >= 0.
    init : Coefficients, optional
        Warm start; zeros by default.
    cfg : SolverConfig, optional

    Raises
    ------
    ConvergenceError
        If the sweep cap is reached before convergence.
    """
    cfg = cfg or SolverConfig()
    if not (np.isfinite(lam) and lam >= 0):
        raise DataError(f"lambda must be finite and >= 0, got {lam}")
    prob = _Problem(d, w)
    if init is None:
        beta0 = np.zeros(prob.keep.size)
    else:
        if init.p != d.p:
            raise DataError(f"init has length {init.p}, dataset has p={d.p}")
        beta0 = init.beta[prob.keep]
    beta, _ = prob.solve(lam, beta0, cfg)
    return prob.expand(beta)


def _trace(prob: _Problem, grid: LambdaGrid, cfg: SolverConfig, beta0: np.ndarray) -> PathResult:
    beta = beta0
    coefs, iters = [], []
    for lam in grid.values:
        beta, used = prob.solve(float(lam), beta, cfg)
        coefs.append(prob.expand(beta))
        iters.append(used)
    return PathResult(grid, coefs, iters, prob.w, cfg)


def solve_on_grid(
    d: Dataset,
    w: WeightVector,
    grid: LambdaGrid,
    cfg: Optional[SolverConfig] = None,
) -> PathResult:
    """Warm-started solutions over a caller-supplied grid (used by k-fold refits)."""
    cfg = cfg or SolverConfig()
    prob = _Problem(d, w)
    return _trace(prob, grid, cfg, np.zeros(prob.keep.size))


def solve_path(d: Dataset, w: WeightVector, cfg: Optional[SolverConfig] = None) -> PathResult:
    """Regularization path from lambda_max down to ``grid_ratio * lambda_max``.

    Coordinates with zero weight are projected out when locating
    lambda_max, so the first path entry holds their least-squares fit and
    zeros elsewhere; without zero weights the first entry is all-zero.
    """
    cfg = cfg or SolverConfig()
    prob = _Problem(d, w)
    lmax, start = prob.lambda_max()
    grid = LambdaGrid.geometric(lmax, cfg.grid_ratio, cfg.grid_length)
    return _trace(prob, grid, cfg, start)


def fraction_grid(path: PathResult, length: Optional[int] = None) -> LambdaGrid:
    """Lambdas whose weighted L1 norms are evenly spaced fractions of the path's last one.

    The norm ``sum_j w_j |beta_j|`` is piecewise linear in lambda between
    breakpoints, so each target is located by linear interpolation between
    neighbouring path entries. Fraction 0 maps to the path's first lambda
    and fraction 1 to its last. Duplicate lambdas are dropped.
    """
    length = len(path) if length is None else int(length)
    if length < 2 or len(path) < 2:
        return path.grid
    w = path.weights.w if path.weights is not None else np.ones(path.beta_matrix().shape[1])
    fin = np.isfinite(w)
    lam = path.lambdas
    norms = np.maximum.accumulate(np.abs(path.beta_matrix()[:, fin]) @ w[fin])
    if norms[-1] <= norms[0]:
        return path.grid
    targets = norms[0] + np.linspace(0.0, 1.0, length) * (norms[-1] - norms[0])
    j = np.clip(np.searchsorted(norms, targets, side="left"), 1, len(lam) - 1)
    lo, hi = norms[j - 1], norms[j]
    t = np.where(hi > lo, (targets - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    values = lam[j - 1] + t * (lam[j] - lam[j - 1])
    values[0], values[-1] = lam[0], lam[-1]
    values = np.unique(values)[::-1]
    return LambdaGrid(values)
