"""Monte Carlo harnesses: pre-asymptotic truth oracle, RMSE study, coverage study,
and reference values under serial independence.

Truth is always defined through the forward representation,
P(X_t/|X_0| <= x | |X_0| > u), whichever estimator is being evaluated.

Seeds: replicate r of a study uses core.derive_rng(seed, r) for its series and
derive_rng(seed, r, 1, ...) for its bootstrap draws; the oracle uses
derive_rng(oracle_seed, r). Tasks carry their own seeds, so every result is
identical for any number of workers.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import settings
from bootstrap import BootstrapScheme, bootstrap_ci
from core import (
    Conditioning,
    EstimatorKind,
    SeriesWindow,
    Target,
    ThresholdSpec,
    derive_rng,
    empirical_quantile,
    resolve_threshold,
)
from errors import NoExceedances, SpectralTailError
from estimators import estimate_target, forward_terms, hill_alpha, target_components
from parallel import map_replicates
from simulators import ModelSpec, simulate_batch

logger = logging.getLogger(__name__)

Cell = Tuple[float, int]


@dataclass(frozen=True)
class OracleSpec:
    model: ModelSpec
    replicates: int = settings.ORACLE_REPLICATES
    length: int = settings.ORACLE_LENGTH
    quantile: float = 0.95
    lags: Tuple[int, ...] = (1,)
    grid: Tuple[float, ...] = (1.0,)
    conditioning: Conditioning = Conditioning.ABSOLUTE
    target: Target = Target.CDF
    # pooled: one threshold from all simulated |X|; otherwise each series uses its own quantile
    pooled: bool = True
    seed: int = settings.DEFAULT_SEED
    burn_in: int = settings.BURN_IN

    def __post_init__(self):
        if self.replicates < 1 or self.length < 1:
            raise ValueError(f"Oracle needs R >= 1 and L >= 1, got R={self.replicates}, L={self.length}")
        if not 0 < self.quantile < 1:
            raise ValueError(f"Oracle quantile must lie in (0,1), got {self.quantile}")
        object.__setattr__(self, "lags", tuple(int(t) for t in self.lags))
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "conditioning", Conditioning(self.conditioning))
        object.__setattr__(self, "target", Target(self.target))

    @property
    def max_lag(self) -> int:
        return max((abs(t) for t in self.lags), default=0)


@dataclass(frozen=True)
class OracleResult:
    value: float
    std_error: float
    used: int
    skipped: int
    threshold: Optional[float] = None


@dataclass
class StudyReport:
    rows: List[dict]
    metadata: Dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def cell(self, **match) -> dict:
        for row in self.rows:
            if all(row.get(key) == value for key, value in match.items()):
                return row
        raise KeyError(match)


# --- Oracle ---

def _chunks(count: int, size: int) -> List[List[int]]:
    return [list(range(start, min(start + size, count))) for start in range(0, count, size)]


def _simulate_windows(model, length, max_lag, burn_in, seed, replicates) -> List[SeriesWindow]:
    paths = simulate_batch(model, length + 2 * max_lag, burn_in, seed, replicates)
    return [SeriesWindow(row, length, max_lag) for row in paths]


def _oracle_tail_worker(task) -> np.ndarray:
    spec, replicates, need = task
    windows = _simulate_windows(spec.model, spec.length, spec.max_lag, spec.burn_in, spec.seed, replicates)
    absolute = np.concatenate([np.abs(w.core) for w in windows])
    # keep only the top `need` values of this chunk
    if need >= absolute.size:
        return absolute
    return np.partition(absolute, absolute.size - need)[absolute.size - need :]


def pooled_quantile(spec: OracleSpec, workers: int = None) -> float:
    """Exact interpolating q-quantile of |X| pooled over all oracle series.

    Only the upper order statistics needed for the interpolation are kept per chunk.
    """
    total = spec.replicates * spec.length
    # type-7 position, 1-based
    position = 1 + spec.quantile * (total - 1)
    low_rank = int(np.floor(position))
    need = total - low_rank + 1
    tasks = [(spec, chunk, need) for chunk in _chunks(spec.replicates, settings.ORACLE_CHUNK)]
    tails = np.concatenate(map_replicates(_oracle_tail_worker, tasks, workers))
    top = np.sort(np.partition(tails, tails.size - need)[tails.size - need :])
    if need == 1:
        return float(top[0])
    return float(top[0] + (position - low_rank) * (top[1] - top[0]))


def _oracle_count_worker(task):
    spec, replicates, pooled_u, cells = task
    numerators = np.zeros((len(replicates), len(cells)))
    denominators = np.zeros(len(replicates))
    windows = _simulate_windows(spec.model, spec.length, spec.max_lag, spec.burn_in, spec.seed, replicates)
    for row, w in enumerate(windows):
        if pooled_u is not None:
            u = pooled_u
        else:
            try:
                u = resolve_threshold(w, ThresholdSpec.quantile(spec.quantile))
            except NoExceedances:
                continue
        for col, (x, t) in enumerate(cells):
            _, components = target_components(spec.target, x)
            for coef, point in components:
                terms = forward_terms(w, u, t, point, spec.conditioning)
                numerators[row, col] += coef * np.count_nonzero(terms.indicator)
            denominators[row] = np.count_nonzero(terms.denominator)
    return numerators, denominators


def oracle_table(spec: OracleSpec, workers: int = None) -> Dict[Cell, OracleResult]:
    """Pre-asymptotic target values for every (x, t) of the oracle grid and lags."""
    cells = [(x, t) for t in spec.lags for x in spec.grid]
    pooled_u = pooled_quantile(spec, workers) if spec.pooled else None
    tasks = [(spec, chunk, pooled_u, cells) for chunk in _chunks(spec.replicates, settings.ORACLE_CHUNK)]
    parts = map_replicates(_oracle_count_worker, tasks, workers)
    numerators = np.concatenate([part[0] for part in parts])
    denominators = np.concatenate([part[1] for part in parts])

    used_rows = denominators > 0
    used = int(np.count_nonzero(used_rows))
    skipped = spec.replicates - used
    if used == 0:
        raise NoExceedances("No oracle series had exceedances")
    if skipped:
        logger.warning("Oracle skipped %d of %d series without exceedances", skipped, spec.replicates)

    table = {}
    for col, (x, t) in enumerate(cells):
        offset, _ = target_components(spec.target, x)
        num, den = numerators[used_rows, col], denominators[used_rows]
        if spec.pooled:
            ratio = num.sum() / den.sum()
            # delta-method standard error of a ratio of sums
            spread = num - ratio * den
            se = np.sqrt(np.sum(spread**2) / max(used * (used - 1), 1)) / den.mean()
        else:
            per_series = num / den
            ratio = per_series.mean()
            se = per_series.std(ddof=1) / np.sqrt(used) if used > 1 else 0.0
        table[(x, t)] = OracleResult(float(offset + ratio), float(se), used, skipped, pooled_u)
    return table


def preasymptotic_truth(spec: OracleSpec, x: float, t: int, workers: int = None) -> OracleResult:
    return oracle_table(replace(spec, grid=(x,), lags=(t,)), workers)[(float(x), int(t))]


# --- Estimator study (bias / sd / RMSE) ---

def _estimator_worker(task):
    model, n, max_lag, q, lags, grid, seed, replicate, burn_in = task
    w = _simulate_windows(model, n, max_lag, burn_in, seed, [replicate])[0]
    try:
        u = resolve_threshold(w, ThresholdSpec.quantile(q))
        alpha = hill_alpha(w, u).alpha
    except SpectralTailError:
        return None
    result = {}
    for t in lags:
        for x in grid:
            forward = estimate_target(w, u, t, x, EstimatorKind.FORWARD).value
            backward = estimate_target(w, u, t, x, EstimatorKind.BACKWARD, alpha=alpha).value
            result[(x, t)] = (forward, backward)
    return result


def study_estimators(model: ModelSpec, n: int, q: float, lags: Sequence[int], grid: Sequence[float],
                     reps: int = settings.STUDY_REPLICATES, oracle: Optional[OracleSpec] = None,
                     truth: Optional[Dict[Cell, OracleResult]] = None, seed: int = settings.DEFAULT_SEED,
                     burn_in: int = settings.BURN_IN, workers: int = None) -> StudyReport:
    """Bias, sd and RMSE of the forward and backward (Hill alpha) cdf estimators."""
    lags = [int(t) for t in lags]
    grid = [float(x) for x in grid]
    if truth is None:
        oracle = oracle or OracleSpec(model, quantile=q, seed=(seed + 1) % 2**64, burn_in=burn_in)
        truth = oracle_table(replace(oracle, lags=tuple(lags), grid=tuple(grid), target=Target.CDF), workers)

    max_lag = max(abs(t) for t in lags)
    tasks = [(model, n, max_lag, q, lags, grid, seed, rep, burn_in) for rep in range(reps)]
    # None marks a replicate without exceedances
    results = [r for r in map_replicates(_estimator_worker, tasks, workers) if r is not None]
    skipped = reps - len(results)
    if not results:
        raise NoExceedances("Every study replicate lacked exceedances")

    rows = []
    for t in lags:
        for x in grid:
            true_value = truth[(x, t)].value
            estimates = np.array([r[(x, t)] for r in results])
            # columns follow EstimatorKind: forward, backward
            errors = estimates - true_value
            stats = {}
            for col, kind in enumerate(EstimatorKind):
                bias = float(errors[:, col].mean())
                sd = float(estimates[:, col].std(ddof=0))
                rmse = float(np.sqrt(np.mean(errors[:, col] ** 2)))
                stats[kind] = (bias, sd, rmse)
            for kind in EstimatorKind:
                bias, sd, rmse = stats[kind]
                forward_rmse = stats[EstimatorKind.FORWARD][2]
                rows.append({
                    "estimator": kind.value, "x": x, "lag": t, "threshold": q, "truth": true_value,
                    "bias": bias, "sd": sd, "rmse": rmse,
                    "rmse_ratio": rmse / forward_rmse if forward_rmse > 0 else float("nan"),
                    "replicates": len(results), "skipped": skipped,
                })
    metadata = {"study": "estimators", "model": model.to_config(), "n": n, "quantile": q,
                "reps": reps, "seed": seed, "burn_in": burn_in}
    return StudyReport(rows, metadata)


# --- Coverage study ---

def _coverage_worker(task):
    (model, n, max_lag, q, lags, x, schemes, level, kind, conditioning, target,
     rescale_from, seed, replicate, burn_in) = task
    w = _simulate_windows(model, n, max_lag, burn_in, seed, [replicate])[0]
    try:
        u = resolve_threshold(w, ThresholdSpec.quantile(q))
    except NoExceedances:
        return None
    variants = [None] if rescale_from is None else [None, ThresholdSpec.quantile(rescale_from)]
    records = []
    for s, scheme in enumerate(schemes):
        for j, t in enumerate(lags):
            for v, low in enumerate(variants):
                # key 1 keeps interval streams apart from the simulation stream
                rng = derive_rng(seed, replicate, 1, s, j, v)
                try:
                    ci = bootstrap_ci(w, u, t, x, kind, conditioning, scheme, level, low, target, rng)
                    records.append((s, t, v, ci.lower, ci.upper, ci.discarded))
                except SpectralTailError as exc:
                    logger.info("Replicate %d, %s, lag %d: CI failed (%s)", replicate, scheme.label, t, exc)
                    records.append((s, t, v, None, None, 0))
    return records


def study_coverage(model: ModelSpec, n: int, q: float, lags: Sequence[int], x: float,
                   schemes: Sequence[BootstrapScheme], reps: int = settings.STUDY_REPLICATES,
                   level: float = 0.95, kind: EstimatorKind = EstimatorKind.BACKWARD,
                   conditioning: Conditioning = Conditioning.ABSOLUTE, target: Target = Target.ABS_SURVIVAL,
                   rescale_from: Optional[float] = None, oracle: Optional[OracleSpec] = None,
                   truth: Optional[Dict[Cell, OracleResult]] = None, seed: int = settings.DEFAULT_SEED,
                   burn_in: int = settings.BURN_IN, workers: int = None) -> StudyReport:
    """Coverage and median width of bootstrap CIs against the oracle truth, per scheme and lag."""
    lags = [int(t) for t in lags]
    x = float(x)
    if rescale_from is not None and not rescale_from < q:
        raise ValueError(f"Rescaling needs a lower quantile than {q}, got {rescale_from}")
    if truth is None:
        oracle = oracle or OracleSpec(model, quantile=q, seed=(seed + 1) % 2**64, burn_in=burn_in)
        truth = oracle_table(replace(oracle, lags=tuple(lags), grid=(x,), conditioning=conditioning,
                                     target=target), workers)

    max_lag = max(abs(t) for t in lags)
    tasks = [(model, n, max_lag, q, lags, x, list(schemes), level, EstimatorKind(kind), Conditioning(conditioning),
              Target(target), rescale_from, seed, rep, burn_in) for rep in range(reps)]
    results = [r for r in map_replicates(_coverage_worker, tasks, workers) if r is not None]

    rows = []
    for s, scheme in enumerate(schemes):
        for t in lags:
            for v in ([0] if rescale_from is None else [0, 1]):
                records = [rec for result in results for rec in result if rec[:3] == (s, t, v)]
                intervals = np.array([(rec[3], rec[4]) for rec in records if rec[3] is not None], dtype=float)
                true_value = truth[(x, t)].value
                failed = len(records) - len(intervals)
                if len(intervals):
                    covered = (intervals[:, 0] <= true_value) & (true_value <= intervals[:, 1])
                    coverage = float(covered.mean())
                    width = float(np.median(intervals[:, 1] - intervals[:, 0]))
                else:
                    coverage, width = float("nan"), float("nan")
                rows.append({
                    "scheme": scheme.kind.value, "block": scheme.block, "lag": t, "x": x,
                    "threshold": q if v == 0 else f"{rescale_from}->{q}",
                    "method": "reflected" if v == 0 else "rescaled",
                    "estimator": EstimatorKind(kind).value, "truth": true_value,
                    "coverage": coverage, "median_width": width,
                    "discarded": int(sum(rec[5] for rec in records)), "failed": failed,
                    "replicates": len(intervals),
                })
    metadata = {
        "study": "coverage", "model": model.to_config(), "n": n, "quantile": q, "level": level,
        "reps": reps, "seed": seed, "burn_in": burn_in, "rescale_from": rescale_from,
        "conditioning": Conditioning(conditioning).value, "target": Target(target).value,
        "schemes": [asdict(scheme) for scheme in schemes],
    }
    return StudyReport(rows, metadata)


# --- Reference values under serial independence ---

@dataclass(frozen=True)
class IndependenceReference:
    mc_value: Optional[float]
    analytic: Optional[float]
    replicates_used: int


def _iid_resample(w: SeriesWindow, rng: np.random.Generator) -> SeriesWindow:
    return SeriesWindow(rng.choice(w.core, size=w.values.size, replace=True), w.n, w.max_lag)


def _iid_estimates(w, u, t, x, kind, conditioning, target, reps, seed) -> np.ndarray:
    rng = derive_rng(seed)
    values = []
    for _ in range(reps):
        resampled = _iid_resample(w, rng)
        # resamples without exceedances are dropped
        try:
            alpha = hill_alpha(resampled, u).alpha if kind == EstimatorKind.BACKWARD else None
            values.append(estimate_target(resampled, u, t, x, kind, conditioning, target, alpha).value)
        except SpectralTailError:
            continue
    return np.array(values)


def independence_reference(w: SeriesWindow, u: float, t: int, x: float,
                           conditioning: Conditioning = Conditioning.ABSOLUTE, mc_reps: int = 1000,
                           seed: int = settings.DEFAULT_SEED,
                           target: Target = Target.ABS_SURVIVAL) -> IndependenceReference:
    """Target probability under serial independence, by iid resampling of the series.

    For P(|X_t| > |X_0| | |X_0| > u) the value is also known exactly: P(|X_0| > u) / 2,
    computed from the empirical exceedance rate.
    """
    conditioning, target = Conditioning(conditioning), Target(target)
    analytic = None
    if conditioning == Conditioning.ABSOLUTE and target == Target.ABS_SURVIVAL and x == 1:
        analytic = np.count_nonzero(np.abs(w.core) > u) / w.n / 2
    if mc_reps <= 0:
        if analytic is None:
            raise ValueError("No closed form for this conditioning/target; mc_reps must be positive")
        return IndependenceReference(None, analytic, 0)
    values = _iid_estimates(w, u, t, x, EstimatorKind.FORWARD, conditioning, target, mc_reps, seed)
    if values.size == 0:
        raise NoExceedances("No iid resample had exceedances")
    return IndependenceReference(float(values.mean()), analytic, int(values.size))


def independence_quantile(w: SeriesWindow, u: float, t: int, x: float, kind: EstimatorKind, level: float,
                          mc_reps: int = 1000, seed: int = settings.DEFAULT_SEED,
                          conditioning: Conditioning = Conditioning.ABSOLUTE,
                          target: Target = Target.ABS_SURVIVAL) -> float:
    """Empirical `level` quantile of the estimator over iid resamples of the series."""
    if not 0 < level <= 1:
        raise ValueError(f"Level must lie in (0,1], got {level}")
    if mc_reps < 1:
        raise ValueError(f"mc_reps must be positive, got {mc_reps}")
    values = _iid_estimates(w, u, t, x, EstimatorKind(kind), Conditioning(conditioning), Target(target), mc_reps, seed)
    if values.size == 0:
        raise NoExceedances("No iid resample had exceedances")
    return float(empirical_quantile(np.sort(values), level))
