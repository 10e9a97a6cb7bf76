"""Stationary and multiplier block bootstrap confidence intervals for tail probabilities.

Stationary bootstrap: blocks X_K, ..., X_{K+L-1} with K uniform on the core and
L geometric(p), wrapping past n to the start of the core. Enough values are drawn
to refill the window buffers as well (n + 2*max_lag in total).

Multiplier block bootstrap: the core is cut into m = n // r blocks of length r
(the last n - m*r indices are dropped) and every block's contribution to the
numerator and denominator sums is multiplied by 1 + xi_j. The Hill estimate is
recomputed with the same weights for every replicate.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

import settings
from core import (
    Conditioning,
    EstimatorKind,
    SeriesWindow,
    Target,
    ThresholdSpec,
    derive_rng,
    empirical_quantile,
    exceedance_mask,
    resolve_threshold,
)
from errors import (
    DegenerateLogs,
    InvalidRatio,
    NoExceedances,
    TooFewReplicates,
    TooManyDiscarded,
    ZeroDenominator,
)
from estimators import (
    cell_terms,
    estimate_target,
    evaluate_terms,
    hill_alpha,
    hill_from_logs,
    log_excesses,
    target_components,
)

logger = logging.getLogger(__name__)


class SchemeKind(str, Enum):
    STATIONARY = "stationary"
    MULTIPLIER = "multiplier"


class MultiplierLaw(str, Enum):
    NORMAL = "normal"
    # point mass at 0; every replicate reproduces the point estimate
    ZERO = "zero"


@dataclass(frozen=True)
class BootstrapScheme:
    """block is the mean block length 1/p (stationary) or the block length r (multiplier)."""

    kind: SchemeKind
    block: float
    replicates: int = settings.BOOTSTRAP_REPLICATES
    seed: int = settings.DEFAULT_SEED
    law: MultiplierLaw = MultiplierLaw.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        object.__setattr__(self, "law", MultiplierLaw(self.law))
        if self.replicates < 1:
            raise ValueError(f"Need at least one replicate, got {self.replicates}")
        if self.kind == SchemeKind.STATIONARY and not self.block >= 1:
            raise ValueError(f"Mean block length must be >= 1 (p in (0,1]), got {self.block}")
        if self.kind == SchemeKind.MULTIPLIER and (self.block < 1 or int(self.block) != self.block):
            raise ValueError(f"Multiplier block length must be a positive integer, got {self.block}")

    @property
    def p(self) -> float:
        return 1.0 / self.block

    @property
    def label(self) -> str:
        return f"{self.kind.value}:{self.block:g}"


@dataclass
class BootstrapCI:
    level: float
    lower: float
    upper: float
    method: str
    point: float
    scheme: Optional[str] = None
    block: Optional[float] = None
    replicates: int = 0
    seed: Optional[int] = None
    discarded: int = 0
    low_threshold_point: Optional[float] = None
    ratio: Optional[float] = None
    draws: Optional[List[float]] = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


# --- Stationary bootstrap ---

def stationary_indices(n: int, total: int, starts: Sequence[int], lengths: Sequence[int]) -> np.ndarray:
    """0-based core positions of the first `total` draws from blocks (K_j, L_j).

    starts are 1-based K_j; positions past n wrap to the start of the core.
    """
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.sum() < total:
        raise ValueError(f"Blocks cover {lengths.sum()} values, need {total}")
    offsets = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    positions = (np.repeat(starts - 1, lengths) + offsets) % n
    return positions[:total]


def stationary_resample(w: SeriesWindow, p: float, rng: np.random.Generator) -> SeriesWindow:
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0,1], got {p}")
    n = w.n
    total = n + 2 * w.max_lag
    lengths = np.empty(0, dtype=np.int64)
    starts = np.empty(0, dtype=np.int64)
    # draw blocks until they cover the core plus both buffers
    while lengths.sum() < total:
        batch = int(np.ceil((total - lengths.sum()) * p)) + 1
        starts = np.concatenate([starts, rng.integers(1, n + 1, size=batch)])
        lengths = np.concatenate([lengths, rng.geometric(p, size=batch)])
    positions = stationary_indices(n, total, starts, lengths)
    return SeriesWindow(w.core[positions], n, w.max_lag)


# --- Multiplier block bootstrap ---

def multiplier_weights(m: int, law: MultiplierLaw, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValueError(f"Need at least one block, got {m}")
    if MultiplierLaw(law) == MultiplierLaw.ZERO:
        return np.zeros(m)
    return rng.standard_normal(m)


def block_count(n: int, r: int) -> int:
    m = n // int(r)
    if m < 1:
        raise ValueError(f"Block length {r} exceeds the core length {n}")
    return m


def index_weights(xi: np.ndarray, r: int) -> np.ndarray:
    """Per-index weights 1 + xi_j over the first m*r core indices."""
    return np.repeat(1.0 + np.asarray(xi, dtype=float), int(r))


def multiplier_hill(w: SeriesWindow, u: float, r: int, xi: np.ndarray) -> float:
    m = block_count(w.n, r)
    exceed, logs = log_excesses(w, u)
    if not np.any(exceed[: m * r]):
        raise NoExceedances(f"No exceedances over u={u:.6g} in the first {m * r} indices")
    try:
        return hill_from_logs(exceed[: m * r], logs[: m * r], index_weights(xi, r))
    except DegenerateLogs as exc:
        raise ZeroDenominator(str(exc)) from exc


def multiplier_forward(w: SeriesWindow, u: float, t: int, x: float, r: int, xi: np.ndarray,
                       conditioning: Conditioning = Conditioning.ABSOLUTE) -> float:
    m = block_count(w.n, r)
    terms = cell_terms(w, u, t, x, EstimatorKind.FORWARD, conditioning).head(m * r)
    return evaluate_terms(terms, weights=index_weights(xi, r))


def multiplier_backward(w: SeriesWindow, u: float, t: int, x: float, r: int, xi: np.ndarray,
                        conditioning: Conditioning = Conditioning.ABSOLUTE,
                        alpha: Optional[float] = None) -> float:
    """Bootstrapped backward estimate; alpha overrides the bootstrapped Hill estimate (tests only)."""
    m = block_count(w.n, r)
    if alpha is None:
        alpha = multiplier_hill(w, u, r, xi)
    terms = cell_terms(w, u, t, x, EstimatorKind.BACKWARD, conditioning).head(m * r)
    return evaluate_terms(terms, alpha, index_weights(xi, r))


# --- Interval construction ---

def ci_reflected(replicates: Sequence[float], point: float, level: float) -> BootstrapCI:
    draws = np.sort(np.asarray(replicates, dtype=float))
    if draws.size < 2:
        raise TooFewReplicates(f"Need at least 2 replicates, got {draws.size}")
    if not 0 < level < 1:
        raise ValueError(f"Level must lie in (0,1), got {level}")
    a, b = empirical_quantile(draws, [(1 - level) / 2, (1 + level) / 2])
    return BootstrapCI(level, 2 * point - b, 2 * point - a, "reflected", point, replicates=int(draws.size))


def ci_rescaled(point: float, low_point: float, a: float, b: float, ratio: float, level: float) -> BootstrapCI:
    """Interval at a high threshold from bootstrap quantiles (a, b) at a lower one.

    ratio estimates v_low / v_high, e.g. the ratio of exceedance counts k_low / k_high.
    """
    if not ratio > 0:
        raise InvalidRatio(f"Exceedance ratio must be positive, got {ratio}")
    scale = np.sqrt(ratio)
    return BootstrapCI(level, scale * (low_point - b) + point, scale * (low_point - a) + point,
                       "rescaled", point, low_threshold_point=low_point, ratio=ratio)


# --- Replicate drivers ---

def _multiplier_draws(w, u, t, x, kind, conditioning, target, scheme, rng) -> Tuple[List[float], int]:
    r = int(scheme.block)
    m = block_count(w.n, r)
    offset, components = target_components(target, x)
    terms = [(coef, cell_terms(w, u, t, point, kind, conditioning).head(m * r)) for coef, point in components]
    # exceedances and log excesses are fixed; only the weights change between replicates
    if kind == EstimatorKind.BACKWARD:
        exceed, logs = log_excesses(w, u)
        exceed, logs = exceed[: m * r], logs[: m * r]

    draws, discarded = [], 0
    for _ in range(scheme.replicates):
        for _attempt in range(settings.MAX_REDRAWS + 1):
            weights = index_weights(multiplier_weights(m, scheme.law, rng), r)
            try:
                alpha = hill_from_logs(exceed, logs, weights) if kind == EstimatorKind.BACKWARD else None
                value = offset + sum(coef * evaluate_terms(part, alpha, weights) for coef, part in terms)
            except (ZeroDenominator, DegenerateLogs):
                continue
            draws.append(value)
            break
        else:  # out of redraws
            discarded += 1
    return draws, discarded


def _stationary_draws(w, u, t, x, kind, conditioning, target, scheme, rng) -> Tuple[List[float], int]:
    draws, discarded = [], 0
    for _ in range(scheme.replicates):
        for _attempt in range(settings.MAX_REDRAWS + 1):
            resampled = stationary_resample(w, scheme.p, rng)
            try:
                alpha = hill_alpha(resampled, u).alpha if kind == EstimatorKind.BACKWARD else None
                value = estimate_target(resampled, u, t, x, kind, conditioning, target, alpha).value
            except (NoExceedances, DegenerateLogs, ZeroDenominator):
                continue
            draws.append(value)
            break
        else:
            discarded += 1
    return draws, discarded


def bootstrap_draws(w: SeriesWindow, u: float, t: int, x: float, kind: EstimatorKind,
                    conditioning: Conditioning, target: Target, scheme: BootstrapScheme,
                    rng: np.random.Generator) -> Tuple[List[float], int]:
    """Replicate values of the estimator and the number of discarded replicates."""
    kind = EstimatorKind(kind)
    conditioning = Conditioning(conditioning)
    if scheme.kind == SchemeKind.MULTIPLIER:
        draws, discarded = _multiplier_draws(w, u, t, x, kind, conditioning, target, scheme, rng)
    else:
        draws, discarded = _stationary_draws(w, u, t, x, kind, conditioning, target, scheme, rng)
    if discarded:
        logger.warning("%s bootstrap discarded %d of %d replicates at u=%.4g, t=%d",
                       scheme.label, discarded, scheme.replicates, u, t)
    if discarded > settings.MAX_DISCARD_FRACTION * scheme.replicates:
        raise TooManyDiscarded(
            f"{discarded} of {scheme.replicates} replicates discarded; the threshold is too high for this sample"
        )
    return draws, discarded


def _point(w, u, t, x, kind, conditioning, target) -> float:
    alpha = hill_alpha(w, u).alpha if EstimatorKind(kind) == EstimatorKind.BACKWARD else None
    return estimate_target(w, u, t, x, kind, conditioning, target, alpha).value


def bootstrap_ci(w: SeriesWindow, u: float, t: int, x: float, kind: EstimatorKind,
                 conditioning: Conditioning, scheme: BootstrapScheme, level: float,
                 low_threshold: Optional[ThresholdSpec] = None, target: Target = Target.CDF,
                 rng: Optional[np.random.Generator] = None, keep_draws: bool = False) -> BootstrapCI:
    """Reflected interval at u, or the rescaled interval built from a lower threshold."""
    rng = rng if rng is not None else derive_rng(scheme.seed)
    point = _point(w, u, t, x, kind, conditioning, target)
    if low_threshold is None:
        draws, discarded = bootstrap_draws(w, u, t, x, kind, conditioning, target, scheme, rng)
        ci = ci_reflected(draws, point, level)
    else:
        u_low = resolve_threshold(w, low_threshold)
        low_point = _point(w, u_low, t, x, kind, conditioning, target)
        draws, discarded = bootstrap_draws(w, u_low, t, x, kind, conditioning, target, scheme, rng)
        if len(draws) < 2:
            raise TooFewReplicates(f"Need at least 2 replicates, got {len(draws)}")
        a, b = empirical_quantile(np.sort(draws), [(1 - level) / 2, (1 + level) / 2])
        # sqrt(k_low / k_high) rescales the spread from the lower threshold
        k_high = np.count_nonzero(exceedance_mask(w, u, Conditioning(conditioning)))
        k_low = np.count_nonzero(exceedance_mask(w, u_low, Conditioning(conditioning)))
        ci = ci_rescaled(point, low_point, a, b, k_low / k_high, level)
    # provenance
    ci.scheme = scheme.kind.value
    ci.block = scheme.block
    ci.replicates = scheme.replicates
    ci.seed = scheme.seed
    ci.discarded = discarded
    if keep_draws:
        ci.draws = list(draws)
    return ci
