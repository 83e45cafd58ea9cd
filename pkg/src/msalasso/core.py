"""Shared data model: datasets, coefficients, weights, grids and ground truth.

All containers are frozen dataclasses whose numpy arrays are marked
read-only, so they can be handed to worker threads without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Threshold used when deciding support membership of imported coefficient
# vectors (solver output uses exact zeros instead).
EXTERNAL_ZERO_TOL = 1e-12


class MSALassoError(Exception):
    """Base class for all package errors."""


class DataError(MSALassoError, ValueError):
    """Malformed or degenerate input data."""


class ConfigError(MSALassoError, ValueError):
    """Invalid configuration; ``fields`` lists every offending key."""

    def __init__(self, message: str, fields: Sequence[str] = ()):
        super().__init__(message)
        self.fields = list(fields)


class ConvergenceError(MSALassoError, RuntimeError):
    """Coordinate descent hit its sweep cap.

    Carries the last iterate and its KKT residual so callers can decide
    whether the point is usable anyway.
    """

    def __init__(self, message: str, last_iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class InvariantError(MSALassoError, AssertionError):
    """A gating invariant (nested supports, sparsity bound, ...) was violated."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix ``x`` (n x p) and response ``y`` (n).

    When ``x_center``/``x_scale``/``y_center`` are present the data are
    standardized and those arrays undo the transformation.
    """

    x: np.ndarray
    y: np.ndarray
    column_names: Optional[tuple] = None
    x_center: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    y_center: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise DataError(f"x must be 2-dimensional, got shape {x.shape}")
        if y.ndim != 1:
            raise DataError(f"y must be 1-dimensional, got shape {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has length {y.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite entries")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != x.shape[1]:
                raise DataError(f"{len(names)} column names for {x.shape[1]} columns")
            object.__setattr__(self, "column_names", names)
        meta = (self.x_center, self.x_scale, self.y_center)
        if any(m is not None for m in meta):
            if any(m is None for m in meta):
                raise DataError("standardization metadata is incomplete")
            center = _frozen(self.x_center)
            scale = _frozen(self.x_scale)
            if center.shape != (x.shape[1],) or scale.shape != (x.shape[1],):
                raise DataError("standardization metadata has the wrong length")
            if not np.all(scale > 0):
                raise DataError("standardization scales must be positive")
            object.__setattr__(self, "x_center", center)
            object.__setattr__(self, "x_scale", scale)
            object.__setattr__(self, "y_center", float(self.y_center))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def standardized(self) -> bool:
        return self.x_scale is not None

    def names(self) -> list[str]:
        if self.column_names is not None:
            return list(self.column_names)
        return [f"x{j}" for j in range(self.p)]

    def subset(self, rows) -> "Dataset":
        """Raw row subset; standardization metadata is dropped."""
        rows = np.asarray(rows)
        return Dataset(self.x[rows], self.y[rows], self.column_names)


@dataclass(frozen=True, eq=False)
class Coefficients:
    beta: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1:
            raise DataError("beta must be a vector")
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.beta + self.intercept

    @classmethod
    def zeros(cls, p: int, intercept: float = 0.0) -> "Coefficients":
        return cls(np.zeros(p), intercept)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Penalty weights in [0, inf]; inf excludes a coordinate, 0 leaves it unpenalized."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.shape[0] == 0:
            raise DataError("weights must be a non-empty vector")
        if np.any(np.isnan(w)) or np.any(w < 0):
            raise DataError("weights must be non-negative")
        object.__setattr__(self, "w", _frozen(w))

    @property
    def p(self) -> int:
        return self.w.shape[0]

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.w)

    @property
    def empty(self) -> bool:
        """True when every coordinate is excluded."""
        return not np.any(self.finite)


@dataclass(frozen=True, eq=False)
class LambdaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] == 0:
            raise ConfigError("lambda grid must be a non-empty vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ConfigError("lambda grid values must be finite and positive")
        if v.shape[0] > 1 and np.any(np.diff(v) >= 0):
            raise ConfigError("lambda grid must be strictly decreasing")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def geometric(cls, lambda_max: float, ratio: float, length: int) -> "LambdaGrid":
        if length < 2 or not (0.0 < ratio < 1.0):
            raise ConfigError(
                f"degenerate grid (length={length}, ratio={ratio}); "
                "need length >= 2 and 0 < ratio < 1"
            )
        if not (np.isfinite(lambda_max) and lambda_max > 0):
            raise ConfigError(f"degenerate grid: lambda_max={lambda_max}")
        values = lambda_max * np.exp(np.linspace(0.0, np.log(ratio), length))
        values[0] = lambda_max
        return cls(values)

    @property
    def ratio(self) -> float:
        return float(self.values[-1] / self.values[0])

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    beta_true: np.ndarray
    rho: float
    sigma: float
    c: float
    p_act: int

    def __post_init__(self):
        b = _frozen(self.beta_true)
        object.__setattr__(self, "beta_true", b)
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}", ["rho"])
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}", ["sigma"])
        lead = b[: self.p_act]
        if np.count_nonzero(b) != self.p_act or np.any(lead != self.c):
            raise DataError("beta_true must be (c,...,c,0,...,0) with p_act leading entries")

    @property
    def p(self) -> int:
        return self.beta_true.shape[0]


@dataclass(frozen=True, eq=False)
class Support:
    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        if idx.ndim != 1:
            raise DataError("support indices must be a vector")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise DataError("support indices must be sorted, unique and non-negative")
        object.__setattr__(self, "indices", _frozen(idx, dtype=np.intp))

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __contains__(self, j) -> bool:
        return bool(np.any(self.indices == j))

    def issubset(self, other: "Support") -> bool:
        return bool(np.all(np.isin(self.indices, other.indices)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Support) and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash(self.indices.tobytes())

    def as_set(self) -> set:
        return set(int(j) for j in self.indices)


def standardize(d: Dataset) -> Dataset:
    """Center ``y``, center and scale every column to unit variance (divisor n).

    A dataset that already carries standardization metadata is returned as is.
    """
    if d.standardized:
        return d
    if d.n < 2:
        raise DataError(f"standardize needs at least 2 rows, got {d.n}")
    const = np.flatnonzero(np.ptp(d.x, axis=0) == 0)
    if const.size:
        raise DataError(f"zero-variance column {int(const[0])}")
    center = d.x.mean(axis=0)
    xc = d.x - center
    scale = np.sqrt((xc * xc).mean(axis=0))
    y_center = float(d.y.mean())
    return Dataset(
        xc / scale,
        d.y - y_center,
        d.column_names,
        x_center=center,
        x_scale=scale,
        y_center=y_center,
    )


def destandardize_coefficients(c: Coefficients, d: Dataset) -> Coefficients:
    """Map coefficients fitted on standardized ``d`` back to the raw scale."""
    if not d.standardized:
        raise DataError("dataset carries no standardization metadata")
    if c.p != d.p:
        raise DataError(f"coefficient length {c.p} does not match p={d.p}")
    beta = c.beta / d.x_scale
    intercept = d.y_center + c.intercept - float(beta @ d.x_center)
    return Coefficients(beta, intercept)


def support_of(c, external: bool = False) -> Support:
    """Indices of nonzero coefficients.

    Solver output has exact zeros; pass ``external=True`` for vectors from
    elsewhere, which treats ``|beta_j| <= 1e-12`` as zero.
    """
    beta = c.beta if isinstance(c, Coefficients) else np.asarray(c, dtype=float)
    if external:
        return Support(np.flatnonzero(np.abs(beta) > EXTERNAL_ZERO_TOL))
    return Support(np.flatnonzero(beta != 0.0))
