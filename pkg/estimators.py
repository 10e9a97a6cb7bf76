"""Forward and backward estimators of the spectral tail process cdf, plus Hill and p-hat.

Both cdf estimators are ratios of sums over core indices i = 1..n:

  forward   F(x) = sum 1(X_{i+t}/|X_i| <= x, |X_i| > u) / sum 1(|X_i| > u)
  backward  F(x) = 1 - sum |X_{i-t}/X_i|^a 1(X_i/|X_{i-t}| > x, |X_i| > u) / sum 1(|X_i| > u)   (x >= 0)
            F(x) =     sum |X_{i-t}/X_i|^a 1(X_i/|X_{i-t}| <= x, |X_i| > u) / sum 1(|X_i| > u)  (x < 0)

Every estimate is computed from per-index TailTerms and an optional per-index
weight vector, so the multiplier bootstrap reuses exactly the same arithmetic
(weights of ones give the plain estimator).

For the sign-conditioned backward estimator the x < 0 numerator indicator
requires X_i < -u while the denominator counts +-X_i > u.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core import Conditioning, EstimatorKind, SeriesWindow, TailEstimate, Target, exceedance_mask
from errors import DegenerateLogs, InvalidAlpha, NoExceedances, ZeroDenominator


# --- Result types ---

@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    exceedance_count: int
    threshold: float


@dataclass(frozen=True)
class AlphaPolicy:
    """'hill' estimates alpha once per threshold; 'fixed' uses the given value."""

    kind: str = "hill"
    value: Optional[float] = None

    @classmethod
    def hill(cls) -> "AlphaPolicy":
        return cls("hill")

    @classmethod
    def fixed(cls, alpha: float) -> "AlphaPolicy":
        if not alpha > 0:
            raise InvalidAlpha(f"alpha must be positive, got {alpha}")
        return cls("fixed", float(alpha))


@dataclass
class EstimateCurve:
    estimator: EstimatorKind
    conditioning: Conditioning
    grid: List[float]
    lags: List[int]
    threshold: float
    alpha: Optional[float]
    target: Target = Target.CDF
    cells: List[TailEstimate] = field(default_factory=list)

    def value(self, x: float, t: int) -> float:
        for cell in self.cells:
            if cell.x == x and cell.lag == t:
                return cell.value
        raise KeyError((x, t))

    def rows(self) -> List[dict]:
        return [
            {
                "estimator": cell.estimator.value,
                "conditioning": cell.conditioning.value,
                "target": cell.target.value,
                "lag": cell.lag,
                "x": cell.x,
                "value": cell.value,
                "exceedance_count": cell.exceedance_count,
                "alpha": cell.alpha_used,
                "threshold": cell.threshold,
            }
            for cell in self.cells
        ]


# --- Per-index terms ---

@dataclass(frozen=True)
class TailTerms:
    """Per-index pieces of one cdf evaluation.

    numerator_i = indicator_i * base_i^alpha (base is None for the forward estimator),
    value = complement ? 1 - num/den : num/den.
    """

    indicator: np.ndarray
    denominator: np.ndarray
    base: Optional[np.ndarray] = None
    complement: bool = False

    def head(self, k: int) -> "TailTerms":
        base = None if self.base is None else self.base[:k]
        return TailTerms(self.indicator[:k], self.denominator[:k], base, self.complement)


def _ratio(num: np.ndarray, den: np.ndarray, where: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.full(num.shape, np.nan), where=where)


def forward_terms(w: SeriesWindow, u: float, t: int, x: float, conditioning: Conditioning) -> TailTerms:
    conditioning = Conditioning(conditioning)
    core = w.core
    lead = w.shifted(t)
    den = exceedance_mask(w, u, conditioning)
    # ratios are taken against the conditioning side of X_i
    if conditioning == Conditioning.ABSOLUTE:
        scale = np.abs(core)
    elif conditioning == Conditioning.POSITIVE:
        scale = core
    else:
        scale = -core
    # nan on non-exceedances compares False
    indicator = (_ratio(lead, scale, den) <= x) & den
    return TailTerms(indicator, den)


def backward_terms(w: SeriesWindow, u: float, t: int, x: float, conditioning: Conditioning) -> TailTerms:
    conditioning = Conditioning(conditioning)
    core = w.core
    lagged = w.shifted(-t)
    den = exceedance_mask(w, u, conditioning)
    # terms with X_{i-t} = 0 contribute nothing
    usable = lagged != 0
    upper = x >= 0

    # signed conditioning: the sign of x picks which tail the numerator uses
    if conditioning == Conditioning.ABSOLUTE:
        event = np.abs(core) > u
        ratio = _ratio(core, np.abs(lagged), event & usable)
        base = np.abs(_ratio(lagged, core, event))
    elif conditioning == Conditioning.POSITIVE:
        event = core > u if upper else core < -u
        ratio = _ratio(core, lagged, event & usable)
        base = _ratio(lagged, core, event) * (1.0 if upper else -1.0)
    else:
        event = core > u if upper else core < -u
        ratio = -_ratio(core, lagged, event & usable)
        base = _ratio(lagged, core, event) * (-1.0 if upper else 1.0)

    # x >= 0 counts the complement event
    hit = (ratio > x) if upper else (ratio <= x)
    indicator = hit & event & usable
    base = np.where(indicator, base, 0.0)
    return TailTerms(indicator, den, base, complement=upper)


def cell_terms(w: SeriesWindow, u: float, t: int, x: float, kind: EstimatorKind, conditioning: Conditioning) -> TailTerms:
    if t == 0:
        raise ValueError("Lag must be nonzero")
    if EstimatorKind(kind) == EstimatorKind.FORWARD:
        return forward_terms(w, u, t, x, conditioning)
    return backward_terms(w, u, t, x, conditioning)


def evaluate_terms(terms: TailTerms, alpha: Optional[float] = None, weights: Optional[np.ndarray] = None) -> float:
    """Value of one cdf evaluation; weights default to ones."""
    if weights is None:
        weights = np.ones(terms.indicator.shape)
    den = float(np.sum(weights * terms.denominator))
    if not den > 0:
        if not np.any(terms.denominator):
            raise NoExceedances("No exceedances for the chosen conditioning")
        raise ZeroDenominator(f"Weighted exceedance count is {den:.6g}")
    if terms.base is None:
        num = float(np.sum(weights * terms.indicator))
    else:
        if alpha is None or not alpha > 0:
            raise InvalidAlpha(f"alpha must be positive, got {alpha}")
        num = float(np.sum(weights * terms.base**alpha))
    return 1.0 - num / den if terms.complement else num / den


# --- Targets ---

def target_components(target: Target, x: float) -> Tuple[float, List[Tuple[float, float]]]:
    """Target value = offset + sum(coef * F(x_k))."""
    target = Target(target)
    if target == Target.CDF:
        return 0.0, [(1.0, x)]
    if target == Target.SURVIVAL:
        return 1.0, [(-1.0, x)]
    # P(|Theta_t| > x) = 1 - F(x) + F(-x)
    if not x > 0:
        raise ValueError(f"abs-survival needs x > 0, got {x}")
    return 1.0, [(-1.0, x), (1.0, -x)]


# --- Tail index and sign balance ---

def hill_from_logs(exceed: np.ndarray, logs: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    if weights is None:
        weights = np.ones(exceed.shape)
    count = float(np.sum(weights * exceed))
    log_sum = float(np.sum(weights * logs))
    if not log_sum > 0 or not count > 0:
        raise DegenerateLogs(f"Hill sums are not positive (count={count:.6g}, log sum={log_sum:.6g})")
    return count / log_sum


def log_excesses(w: SeriesWindow, u: float) -> Tuple[np.ndarray, np.ndarray]:
    """Exceedance mask and log(|X_i|/u) on exceedances (0 elsewhere)."""
    absolute = np.abs(w.core)
    exceed = absolute > u
    logs = np.zeros(absolute.shape)
    np.log(absolute / u, out=logs, where=exceed)
    return exceed, logs


def hill_alpha(w: SeriesWindow, u: float) -> AlphaEstimate:
    exceed, logs = log_excesses(w, u)
    k = int(np.count_nonzero(exceed))
    if k == 0:
        raise NoExceedances(f"No core observation exceeds u={u:.6g}")
    return AlphaEstimate(hill_from_logs(exceed, logs), k, u)


def p_hat(w: SeriesWindow, u: float) -> float:
    k = np.count_nonzero(exceedance_mask(w, u, Conditioning.ABSOLUTE))
    if k == 0:
        raise NoExceedances(f"No core observation exceeds u={u:.6g}")
    return np.count_nonzero(exceedance_mask(w, u, Conditioning.POSITIVE)) / k


# --- Cdf estimators ---

def _denominator_count(w: SeriesWindow, u: float, conditioning: Conditioning) -> int:
    k = int(np.count_nonzero(exceedance_mask(w, u, Conditioning(conditioning))))
    if k == 0:
        raise NoExceedances(f"No {Conditioning(conditioning).value} exceedances over u={u:.6g}")
    return k


def forward_cdf(w: SeriesWindow, u: float, t: int, x: float,
                conditioning: Conditioning = Conditioning.ABSOLUTE) -> TailEstimate:
    k = _denominator_count(w, u, conditioning)
    value = evaluate_terms(forward_terms(w, u, t, x, conditioning))
    return TailEstimate(EstimatorKind.FORWARD, Conditioning(conditioning), t, x, value, k, None, Target.CDF, u)


def backward_cdf(w: SeriesWindow, u: float, t: int, x: float, alpha: float,
                 conditioning: Conditioning = Conditioning.ABSOLUTE) -> TailEstimate:
    if not alpha > 0:
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")
    k = _denominator_count(w, u, conditioning)
    value = evaluate_terms(backward_terms(w, u, t, x, conditioning), alpha)
    return TailEstimate(EstimatorKind.BACKWARD, Conditioning(conditioning), t, x, value, k, alpha, Target.CDF, u)


def survival(w: SeriesWindow, u: float, t: int, x: float,
             conditioning: Conditioning = Conditioning.ABSOLUTE) -> float:
    """1 - forward F(x): the frequency of X_{i+t}/|X_i| > x (strict)."""
    return 1.0 - forward_cdf(w, u, t, x, conditioning).value


def estimate_target(w: SeriesWindow, u: float, t: int, x: float, kind: EstimatorKind,
                    conditioning: Conditioning = Conditioning.ABSOLUTE, target: Target = Target.CDF,
                    alpha: Optional[float] = None) -> TailEstimate:
    """Estimate a target functional at (x, t); backward needs alpha."""
    kind = EstimatorKind(kind)
    k = _denominator_count(w, u, conditioning)
    if kind == EstimatorKind.BACKWARD and (alpha is None or not alpha > 0):
        raise InvalidAlpha(f"Backward estimation needs a positive alpha, got {alpha}")
    offset, components = target_components(target, x)
    value = offset
    for coef, point in components:
        value += coef * evaluate_terms(cell_terms(w, u, t, point, kind, conditioning), alpha)
    used = alpha if kind == EstimatorKind.BACKWARD else None
    return TailEstimate(kind, Conditioning(conditioning), t, x, value, k, used, Target(target), u)


def sweep(w: SeriesWindow, u: float, kind: EstimatorKind, conditioning: Conditioning,
          lags: Sequence[int], grid: Sequence[float], alpha_policy: AlphaPolicy = AlphaPolicy.hill(),
          target: Target = Target.CDF) -> EstimateCurve:
    grid = [float(x) for x in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("Grid must be strictly increasing")
    kind = EstimatorKind(kind)
    # one alpha for the whole curve
    alpha = None
    if kind == EstimatorKind.BACKWARD:
        alpha = alpha_policy.value if alpha_policy.kind == "fixed" else hill_alpha(w, u).alpha
    curve = EstimateCurve(kind, Conditioning(conditioning), grid, list(lags), u, alpha, Target(target))
    for t in lags:
        if t == 0 or abs(t) > w.max_lag:
            raise ValueError(f"Lag {t} must be nonzero with |t| <= {w.max_lag}")
        for x in grid:
            curve.cells.append(estimate_target(w, u, t, x, kind, conditioning, target, alpha))
    return curve
