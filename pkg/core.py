"""Domain types shared by every estimator: series windows, thresholds, tail estimates.

A SeriesWindow holds X_{1-t~}, ..., X_{n+t~}: the core indices 1..n plus a buffer
of t~ observations on each side so that lagged values X_{i-t} and X_{i+t} exist
for every core index i and every |t| <= t~. Indices in this module are 1-based
core indices, matching the estimator formulas.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from errors import NoExceedances


class Conditioning(str, Enum):
    ABSOLUTE = "absolute"
    POSITIVE = "positive"
    NEGATIVE = "negative"


class EstimatorKind(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class Target(str, Enum):
    """Functional of the cdf F of Theta_t being estimated.

    cdf:          F(x)
    survival:     1 - F(x)           = P(Theta_t > x)
    abs-survival: 1 - F(x) + F(-x)   = P(|Theta_t| > x), x > 0
    """

    CDF = "cdf"
    SURVIVAL = "survival"
    ABS_SURVIVAL = "abs-survival"


@dataclass(frozen=True)
class SeriesWindow:
    values: np.ndarray
    n: int
    max_lag: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("SeriesWindow values must be one-dimensional")
        if self.n < 1 or self.max_lag < 0:
            raise ValueError(f"Invalid window: n={self.n}, max_lag={self.max_lag}")
        if values.size != self.n + 2 * self.max_lag:
            raise ValueError(
                f"Window needs n + 2*max_lag = {self.n + 2 * self.max_lag} values, got {values.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, raw, max_lag: int) -> "SeriesWindow":
        """Frame a raw sequence: the first and last max_lag values become buffers."""
        raw = np.asarray(raw, dtype=float)
        n = raw.size - 2 * max_lag
        if n < 1:
            raise ValueError(f"Series of length {raw.size} is too short for max_lag={max_lag}")
        return cls(raw, n, max_lag)

    @property
    def core(self) -> np.ndarray:
        return self.values[self.max_lag : self.max_lag + self.n]

    def shifted(self, t: int) -> np.ndarray:
        """X_{i+t} for i = 1..n."""
        if abs(t) > self.max_lag:
            raise ValueError(f"Lag {t} exceeds the window's max_lag {self.max_lag}")
        start = self.max_lag + t
        return self.values[start : start + self.n]

    def head(self, k: int) -> "SeriesWindow":
        """Window whose core is the first k core observations (buffers kept)."""
        if not 1 <= k <= self.n:
            raise ValueError(f"head size must be in 1..{self.n}, got {k}")
        return SeriesWindow(self.values[: k + 2 * self.max_lag], k, self.max_lag)


@dataclass(frozen=True)
class ThresholdSpec:
    kind: str  # "quantile" or "absolute"
    level: float

    def __post_init__(self):
        if self.kind == "quantile":
            if not 0.0 < self.level < 1.0:
                raise ValueError(f"Threshold quantile must lie in (0,1), got {self.level}")
        elif self.kind == "absolute":
            if not self.level > 0.0:
                raise ValueError(f"Absolute threshold must be positive, got {self.level}")
        else:
            raise ValueError(f"Unknown threshold kind '{self.kind}'")

    @classmethod
    def quantile(cls, q: float) -> "ThresholdSpec":
        return cls("quantile", q)

    @classmethod
    def absolute(cls, u: float) -> "ThresholdSpec":
        return cls("absolute", u)


@dataclass(frozen=True)
class TailEstimate:
    estimator: EstimatorKind
    conditioning: Conditioning
    lag: int
    x: float
    value: float
    exceedance_count: int
    alpha_used: Optional[float] = None
    target: Target = Target.CDF
    threshold: Optional[float] = None


def empirical_quantile(values, q: Union[float, np.ndarray]):
    """Interpolating quantile: position 1 + q*(k-1) among the sorted values."""
    return np.quantile(np.asarray(values, dtype=float), q, method="linear")


def resolve_threshold(w: SeriesWindow, spec: ThresholdSpec) -> float:
    if spec.kind == "absolute":
        u = float(spec.level)
    else:
        u = float(empirical_quantile(np.abs(w.core), spec.level))
    if not np.any(np.abs(w.core) > u):
        raise NoExceedances(f"No core observation exceeds the threshold u={u:.6g}")
    return u


def exceedance_mask(w: SeriesWindow, u: float, sign: Conditioning) -> np.ndarray:
    core = w.core
    if sign == Conditioning.ABSOLUTE:
        return np.abs(core) > u
    if sign == Conditioning.POSITIVE:
        return core > u
    return -core > u


def exceedance_indices(w: SeriesWindow, u: float, sign: Conditioning = Conditioning.ABSOLUTE) -> np.ndarray:
    """1-based core indices i with |X_i| > u (or +-X_i > u)."""
    if not u > 0:
        raise ValueError(f"Threshold must be positive, got {u}")
    return np.flatnonzero(exceedance_mask(w, u, Conditioning(sign))) + 1


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 stream for (seed, keys); distinct key tuples give independent streams."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys)))
