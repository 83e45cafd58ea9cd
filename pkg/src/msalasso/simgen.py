"""Synthetic sparse-regression instances with AR(1)-correlated Gaussian designs."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Dataset, GroundTruth

PURPOSES = {"design-train": 0, "design-val": 1, "noise-train": 2, "noise-val": 3}


@dataclass(frozen=True)
class SimConfig:
    p: int = 500
    n_train: int = 100
    n_val: int = 50
    p_act: int = 3
    rho: float = 0.0
    snr: float = 9.0
    sigma: float = 1.0
    runs: int = 100
    M: int = 3
    seed: int = 20080801
    include_two_stage_opt: bool = False
    grid_length: int = 100
    grid_ratio: float = 1e-3
    grid1_length: int = 50
    grid2_length: int = 50
    # noise SD used to size the signal; 0 means "same as sigma". Setting
    # sigma small with calibration_sigma = 1 gives a near-noiseless problem
    # at the usual signal strength.
    calibration_sigma: float = 0.0
    # candidate lambdas for tuning: "lambda" (geometric) or "l1_fraction"
    tuning_spacing: str = "lambda"

    @property
    def signal_sigma(self) -> float:
        return self.calibration_sigma or self.sigma

    def problems(self) -> list[str]:
        """Names of every field that violates its constraint."""
        bad = []
        if self.p < 1:
            bad.append("p")
        if self.n_train < 2:
            bad.append("n_train")
        if self.n_val < 1:
            bad.append("n_val")
        if not (1 <= self.p_act <= self.p):
            bad.append("p_act")
        if not (0.0 <= self.rho < 1.0):
            bad.append("rho")
        if not self.snr > 0:
            bad.append("snr")
        if not self.sigma > 0:
            bad.append("sigma")
        if self.runs < 1:
            bad.append("runs")
        if self.M < 1:
            bad.append("M")
        if not (0 <= self.seed < 2**64):
            bad.append("seed")
        if self.grid_length < 2:
            bad.append("grid_length")
        if not (0.0 < self.grid_ratio < 1.0):
            bad.append("grid_ratio")
        if self.grid1_length < 2:
            bad.append("grid1_length")
        if self.grid2_length < 2:
            bad.append("grid2_length")
        if self.calibration_sigma < 0:
            bad.append("calibration_sigma")
        if self.tuning_spacing not in ("lambda", "l1_fraction"):
            bad.append("tuning_spacing")
        return bad

    def validate(self) -> "SimConfig":
        bad = self.problems()
        if bad:
            raise ConfigError(f"invalid simulation config: {', '.join(bad)}", bad)
        return self

    def to_text(self) -> str:
        lines = ["# msalasso simulation config"]
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "SimConfig":
        """Build from string values; every malformed or unknown key is reported."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs, bad = {}, []
        for key, raw in values.items():
            if key not in types:
                bad.append(key)
                continue
            try:
                kwargs[key] = _parse_value(types[key], raw)
            except ValueError:
                bad.append(key)
        if bad:
            raise ConfigError(f"invalid simulation config: {', '.join(bad)}", bad)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "SimConfig":
        return cls.from_mapping(parse_key_values(text))


def _parse_value(typ, raw: str):
    raw = raw.strip()
    if typ in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(raw)
    if typ in ("str", str):
        return raw
    if typ in ("int", int):
        return int(raw)
    return float(raw)


def parse_key_values(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class RngStream:
    """Independent, reproducible generators keyed by (run, purpose)."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, run: int, purpose: str) -> np.random.Generator:
        tag = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(run), tag))
        return np.random.Generator(np.random.PCG64(ss))


def gen_ar1_design(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) with ``Sigma[i, j] = rho**|i - j|``.

    Built column by column from ``x_j = rho * x_{j-1} + sqrt(1 - rho^2) * z_j``.
    """
    if not (0.0 <= rho < 1.0):
        raise ConfigError(f"rho must lie in [0, 1), got {rho}", ["rho"])
    z = rng.standard_normal((n, p))
    if rho == 0.0:
        return z
    s = np.sqrt(1.0 - rho * rho)
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + s * z[:, j]
    return x


def ar1_signal_sum(p_act: int, rho: float) -> float:
    """``sum_{i,j < p_act} rho**|i-j|``, the signal variance per unit c^2."""
    k = np.arange(1, p_act)
    return float(p_act + 2.0 * np.sum((p_act - k) * rho**k))


def calibrate_c(p_act: int, rho: float, snr: float, sigma: float) -> float:
    """Amplitude c giving ``beta' Sigma beta / sigma^2 == snr`` for beta = (c,..,c,0,..)."""
    if p_act < 1 or not snr > 0 or not sigma > 0:
        raise ConfigError("calibrate_c needs p_act >= 1, snr > 0 and sigma > 0")
    return sigma * float(np.sqrt(snr / ar1_signal_sum(p_act, rho)))


def ground_truth(cfg: SimConfig) -> GroundTruth:
    c = calibrate_c(cfg.p_act, cfg.rho, cfg.snr, cfg.signal_sigma)
    beta = np.zeros(cfg.p)
    beta[: cfg.p_act] = c
    return GroundTruth(beta, cfg.rho, cfg.sigma, c, cfg.p_act)


def gen_instance(cfg: SimConfig, run: int):
    """Training set, validation set and ground truth for simulation run ``run``."""
    cfg.validate()
    truth = ground_truth(cfg)
    streams = RngStream(cfg.seed)
    out = []
    for part, n in (("train", cfg.n_train), ("val", cfg.n_val)):
        x = gen_ar1_design(n, cfg.p, cfg.rho, streams.generator(run, f"design-{part}"))
        eps = cfg.sigma * streams.generator(run, f"noise-{part}").standard_normal(n)
        out.append(Dataset(x, x @ truth.beta_true + eps))
    return out[0], out[1], truth
