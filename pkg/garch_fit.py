"""Gaussian quasi-maximum-likelihood fit of GARCH(1,1) by Nelder-Mead.

The search runs on unconstrained parameters:
    omega  = var(r) * exp(theta0)
    alpha1 = s * a,  beta1 = s * (1 - a),  s = expit(theta1), a = expit(theta2)
so omega > 0, alpha1, beta1 >= 0 and alpha1 + beta1 < 1 hold everywhere.
sigma_1^2 starts at the sample variance. Standard errors come from a central
finite-difference Hessian of the log-likelihood in the natural parameters.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit

from errors import DegenerateData, InsufficientData, NoConvergence
from simulators import Innovation, ModelSpec

logger = logging.getLogger(__name__)

MIN_LENGTH = 100
MAX_ITERATIONS = 4000
PARAM_NAMES = ("omega", "alpha1", "beta1")


@dataclass
class FitResult:
    kind: str
    params: Dict[str, float]
    log_likelihood: float
    converged: bool
    iterations: int
    std_errors: Optional[Dict[str, float]] = None
    message: str = ""
    extra: Dict = field(default_factory=dict)

    def to_model_spec(self, innovation: Innovation = Innovation.NORMAL, nu: Optional[float] = None) -> ModelSpec:
        return ModelSpec.garch11(self.params["omega"], self.params["alpha1"], self.params["beta1"], innovation, nu)


def garch_variance(returns: np.ndarray, omega: float, alpha1: float, beta1: float, initial: float) -> np.ndarray:
    drive = np.empty_like(returns)
    drive[0] = initial
    drive[1:] = omega + alpha1 * returns[:-1] ** 2
    return lfilter([1.0], [1.0, -beta1], drive)


def gaussian_loglik(returns: np.ndarray, params, initial: float) -> float:
    omega, alpha1, beta1 = params
    sigma2 = garch_variance(returns, omega, alpha1, beta1, initial)
    if not np.all(sigma2 > 0):
        return -np.inf
    return float(-0.5 * np.sum(np.log(2 * np.pi) + np.log(sigma2) + returns**2 / sigma2))


def _natural(theta: np.ndarray, variance: float):
    persistence, share = expit(theta[1]), expit(theta[2])
    return variance * np.exp(theta[0]), persistence * share, persistence * (1.0 - share)


def _std_errors(returns: np.ndarray, params: np.ndarray, initial: float, h: float = 1e-4) -> Optional[np.ndarray]:
    eps = np.where(np.abs(params) > 1e-8, np.abs(params) * h, 1e-6)
    size = len(params)
    hess = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            e_i = np.eye(size)[i] * eps[i]
            e_j = np.eye(size)[j] * eps[j]
            l1 = gaussian_loglik(returns, params + e_i + e_j, initial)
            l2 = gaussian_loglik(returns, params + e_i - e_j, initial)
            l3 = gaussian_loglik(returns, params - e_i + e_j, initial)
            l4 = gaussian_loglik(returns, params - e_i - e_j, initial)
            hess[i, j] = (l1 - l2 - l3 + l4) / (4 * eps[i] * eps[j])
    try:
        covariance = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        return None
    diagonal = np.diag(covariance)
    if not np.all(np.isfinite(diagonal)) or np.any(diagonal <= 0):
        return None
    return np.sqrt(diagonal)


def fit_garch11(returns, max_iterations: int = MAX_ITERATIONS) -> FitResult:
    r = np.asarray(getattr(returns, "returns", returns), dtype=float)
    if r.size < MIN_LENGTH:
        raise InsufficientData(f"GARCH fitting needs at least {MIN_LENGTH} returns, got {r.size}")
    variance = float(np.var(r))
    if not variance > 0:
        raise DegenerateData("Returns have zero variance")

    def objective(theta):
        value = gaussian_loglik(r, _natural(theta, variance), variance)
        return -value if np.isfinite(value) else 1e300

    start = np.array([np.log(0.05), logit(0.95), logit(0.05 / 0.95)])
    options = {"maxiter": max_iterations, "maxfev": 2 * max_iterations, "xatol": 1e-6, "fatol": 1e-7}
    result = minimize(objective, start, method="Nelder-Mead", options=options)
    iterations = result.nit
    # restart from the optimum with a fresh simplex
    result = minimize(objective, result.x, method="Nelder-Mead", options=options)
    iterations += result.nit
    if not result.success:
        raise NoConvergence(f"Nelder-Mead stopped after {iterations} iterations: {result.message}")

    params = np.array(_natural(result.x, variance))
    se = _std_errors(r, params, variance)
    if se is None:
        logger.warning("Hessian at the optimum is not negative definite; no standard errors")
    fit = FitResult(
        kind="garch11",
        params=dict(zip(PARAM_NAMES, map(float, params))),
        log_likelihood=-float(result.fun),
        converged=True,
        iterations=int(iterations),
        std_errors=None if se is None else dict(zip(PARAM_NAMES, map(float, se))),
        message=str(result.message),
    )
    logger.info("GARCH(1,1) fit: omega=%.3g alpha1=%.4f beta1=%.4f (%d iterations)",
                fit.params["omega"], fit.params["alpha1"], fit.params["beta1"], fit.iterations)
    return fit
