"""Financial-returns pipeline: tail index, sign-conditioned backward estimates with
rescaled multiplier-bootstrap intervals, independence references, GARCH/APARCH
model curves and residual re-analysis.

Each panel is one conditional probability given a shock of either sign:
    abs-exceed  P(|Theta_t| > 1 | Theta_0 = +-1)
    upper       P(Theta_t > 1   | Theta_0 = +-1)
    lower       P(Theta_t < -1  | Theta_0 = +-1), estimated as F(-1)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

import settings
from bootstrap import BootstrapScheme, SchemeKind, bootstrap_ci
from core import Conditioning, EstimatorKind, SeriesWindow, Target, ThresholdSpec, derive_rng, resolve_threshold
from errors import SpectralTailError
from estimators import AlphaEstimate, estimate_target, hill_alpha, p_hat
from garch_fit import FitResult, fit_garch11
from ingest import ReturnSeries
from simulators import REFERENCE_FITS, ModelSpec, residuals
from study import OracleSpec, independence_quantile, independence_reference, oracle_table

logger = logging.getLogger(__name__)

PANELS: Tuple[Tuple[str, Target, float], ...] = (
    ("abs-exceed", Target.ABS_SURVIVAL, 1.0),
    ("upper", Target.SURVIVAL, 1.0),
    ("lower", Target.CDF, -1.0),
)
SIGNS = (Conditioning.POSITIVE, Conditioning.NEGATIVE)


@dataclass(frozen=True)
class ApplicationConfig:
    quantile: float = 0.98
    rescale_from: Optional[float] = 0.95
    level: float = 0.8
    lags: Tuple[int, ...] = tuple(range(1, 11))
    block: int = 100
    replicates: int = 1000
    independence_reps: int = 1000
    independence_level: float = 0.8
    fit_garch: bool = True
    aparch: Optional[ModelSpec] = REFERENCE_FITS["sp500-aparch"]
    oracle_replicates: int = settings.ORACLE_REPLICATES
    oracle_length: int = settings.ORACLE_LENGTH
    seed: int = settings.DEFAULT_SEED
    burn_in: int = settings.BURN_IN

    @property
    def max_lag(self) -> int:
        return max(abs(t) for t in self.lags)


@dataclass
class ApplicationResult:
    threshold: float
    alpha: AlphaEstimate
    positive_share: float
    estimates: List[dict] = field(default_factory=list)
    residual_rows: List[dict] = field(default_factory=list)
    fits: Dict[str, FitResult] = field(default_factory=dict)
    models: Dict[str, ModelSpec] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "alpha": self.alpha.alpha,
            "exceedances": self.alpha.exceedance_count,
            "p_hat": self.positive_share,
            "models": {name: model.to_config() for name, model in self.models.items()},
            "fits": {
                name: {"params": fit.params, "std_errors": fit.std_errors, "log_likelihood": fit.log_likelihood,
                       "converged": fit.converged, "iterations": fit.iterations}
                for name, fit in self.fits.items()
            },
        }


def _nan_cell(exc: Exception, what: str) -> float:
    logger.warning("%s failed: %s", what, exc)
    return float("nan")


def _sample_panels(w: SeriesWindow, u: float, alpha: float, config: ApplicationConfig) -> List[dict]:
    scheme = BootstrapScheme(SchemeKind.MULTIPLIER, config.block, config.replicates, config.seed)
    low = ThresholdSpec.quantile(config.rescale_from) if config.rescale_from is not None else None
    rows = []
    for p, (panel, target, x) in enumerate(PANELS):
        for s, sign in enumerate(SIGNS):
            for t in config.lags:
                row = {"panel": panel, "target": target.value, "x": x, "conditioning": sign.value, "lag": t}
                try:
                    row["estimate"] = estimate_target(w, u, t, x, EstimatorKind.BACKWARD, sign, target, alpha).value
                except SpectralTailError as exc:
                    row["estimate"] = _nan_cell(exc, f"{panel}/{sign.value} lag {t} estimate")
                try:
                    ci = bootstrap_ci(w, u, t, x, EstimatorKind.BACKWARD, sign, scheme, config.level, low, target,
                                      derive_rng(config.seed, p, s, t))
                    row["ci_lower"], row["ci_upper"] = ci.lower, ci.upper
                except SpectralTailError as exc:
                    row["ci_lower"] = row["ci_upper"] = _nan_cell(exc, f"{panel}/{sign.value} lag {t} interval")
                try:
                    reference = independence_reference(w, u, t, x, sign, config.independence_reps,
                                                       config.seed, target)
                    row["independence"] = reference.mc_value
                except SpectralTailError as exc:
                    row["independence"] = _nan_cell(exc, f"{panel}/{sign.value} lag {t} independence reference")
                rows.append(row)
    return rows


def _model_curves(rows: List[dict], name: str, model: ModelSpec, config: ApplicationConfig,
                  workers: Optional[int]) -> None:
    for panel, target, x in PANELS:
        for sign in SIGNS:
            spec = OracleSpec(model, config.oracle_replicates, config.oracle_length, config.quantile,
                              tuple(config.lags), (x,), sign, target, seed=(config.seed + 1) % 2**64,
                              burn_in=config.burn_in)
            table = oracle_table(spec, workers)
            for row in rows:
                if row["panel"] == panel and row["conditioning"] == sign.value:
                    result = table[(x, row["lag"])]
                    row[name] = result.value
                    row[f"{name}_se"] = result.std_error


def _residual_rows(source: str, values: np.ndarray, config: ApplicationConfig) -> List[dict]:
    w = SeriesWindow.from_raw(values, config.max_lag)
    u = resolve_threshold(w, ThresholdSpec.quantile(config.quantile))
    alpha = hill_alpha(w, u).alpha
    rows = []
    for sign in SIGNS:
        for t in config.lags:
            row = {"source": source, "conditioning": sign.value, "lag": t, "alpha": alpha}
            try:
                row["estimate"] = estimate_target(w, u, t, 1.0, EstimatorKind.BACKWARD, sign,
                                                  Target.ABS_SURVIVAL, alpha).value
            except SpectralTailError as exc:
                row["estimate"] = _nan_cell(exc, f"{source}/{sign.value} lag {t} estimate")
            try:
                row["independence_quantile"] = independence_quantile(
                    w, u, t, 1.0, EstimatorKind.BACKWARD, config.independence_level, config.independence_reps,
                    config.seed, sign, Target.ABS_SURVIVAL)
            except SpectralTailError as exc:
                row["independence_quantile"] = _nan_cell(exc, f"{source}/{sign.value} lag {t} reference")
            rows.append(row)
    return rows


def run_application(series: ReturnSeries, config: ApplicationConfig = ApplicationConfig(),
                    workers: Optional[int] = None) -> ApplicationResult:
    returns = np.asarray(series.returns, dtype=float)

    # --- STEP 1: threshold and tail index ---
    w = SeriesWindow.from_raw(returns, config.max_lag)
    u = resolve_threshold(w, ThresholdSpec.quantile(config.quantile))
    alpha = hill_alpha(w, u)
    result = ApplicationResult(u, alpha, p_hat(w, u))
    logger.info("Threshold u=%.4g, alpha=%.3f from %d exceedances", u, alpha.alpha, alpha.exceedance_count)

    # --- STEP 2: sample panels with intervals and independence lines ---
    result.estimates = _sample_panels(w, u, alpha.alpha, config)

    # --- STEP 3: model curves ---
    if config.fit_garch:
        fit = fit_garch11(series)
        result.fits["garch"] = fit
        result.models["garch"] = fit.to_model_spec()
    if config.aparch is not None:
        result.models["aparch"] = config.aparch.validate()
    for name, model in result.models.items():
        logger.info("Computing pre-asymptotic curves for the %s model", name)
        _model_curves(result.estimates, name, model, config, workers)

    # --- STEP 4: residual re-analysis ---
    result.residual_rows = _residual_rows("returns", returns, config)
    for name, model in result.models.items():
        result.residual_rows += _residual_rows(f"{name}-residuals", residuals(returns, model), config)
    return result
