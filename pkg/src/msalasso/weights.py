"""Penalty-weight rules that turn a previous estimate into the next step's weights."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Coefficients, ConfigError, DataError, WeightVector

SCAD_A = 3.7

# CLI / config names -> rule kinds
RULE_NAMES = {"uniform": "uniform", "adaptive": "adaptive", "scad": "scad_lla", "mle": "mle_init"}


@dataclass(frozen=True)
class WeightRule:
    kind: str = "adaptive"
    a: float = SCAD_A
    lam: Optional[float] = None

    def __post_init__(self):
        kind = RULE_NAMES.get(self.kind, self.kind)
        if kind not in RULE_NAMES.values():
            raise ConfigError(
                f"unknown weight rule {self.kind!r}; choose from {sorted(RULE_NAMES)}", ["weights"]
            )
        object.__setattr__(self, "kind", kind)
        if kind == "scad_lla":
            if not self.a > 2:
                raise ConfigError(f"SCAD constant a must exceed 2, got {self.a}", ["a"])
            if self.lam is not None and not self.lam > 0:
                raise ConfigError(f"SCAD lambda must be positive, got {self.lam}", ["lam"])

    def __call__(self, prev: Coefficients, lam: Optional[float] = None) -> WeightVector:
        if self.kind == "uniform":
            return uniform_weights(prev.p)
        if self.kind == "adaptive":
            return adaptive_weights(prev)
        if self.kind == "mle_init":
            return mle_init_weights(prev.p)
        lam = self.lam if self.lam is not None else lam
        if lam is None:
            raise ConfigError("SCAD weights need the lambda at which to evaluate the derivative")
        if lam == 0.0:
            # limit of p'_lam(|b|) / lam as lam -> 0, after an unpenalized step
            return WeightVector(np.where(prev.beta == 0, 1.0, 0.0))
        return scad_lla_weights(prev, lam, self.a)


def uniform_weights(p: int) -> WeightVector:
    if p < 1:
        raise DataError(f"need p >= 1, got {p}")
    return WeightVector(np.ones(p))


def mle_init_weights(p: int) -> WeightVector:
    """All-zero weights: the first fit becomes unpenalized least squares (needs n >= p)."""
    if p < 1:
        raise DataError(f"need p >= 1, got {p}")
    return WeightVector(np.zeros(p))


def adaptive_weights(prev: Coefficients) -> WeightVector:
    """``1/|beta_j|``, with +inf wherever ``beta_j`` is exactly zero."""
    a = np.abs(prev.beta)
    w = np.full(a.shape, np.inf)
    nz = a != 0
    w[nz] = 1.0 / a[nz]
    return WeightVector(w)


def scad_derivative(t, lam: float, a: float = SCAD_A) -> np.ndarray:
    """Derivative of the SCAD penalty at ``t >= 0``."""
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))


def scad_penalty(t, lam: float, a: float = SCAD_A) -> np.ndarray:
    t = np.abs(np.asarray(t, dtype=float))
    mid = (2 * a * lam * t - t * t - lam * lam) / (2 * (a - 1))
    return np.where(t <= lam, lam * t, np.where(t <= a * lam, mid, lam * lam * (a + 1) / 2))


def scad_lla_weights(prev: Coefficients, lam: float, a: float = SCAD_A) -> WeightVector:
    """Local linear approximation weights ``p'_lam(|beta_j|) / lam``, all in [0, 1].

    Unlike the adaptive rule these never exclude a coordinate: a zero
    coefficient gets weight 1.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ConfigError(f"SCAD lambda must be positive, got {lam}", ["lam"])
    if not a > 2:
        raise ConfigError(f"SCAD constant a must exceed 2, got {a}", ["a"])
    return WeightVector(scad_derivative(prev.beta, lam, a) / lam)
