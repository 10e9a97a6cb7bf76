"""Seeded generators for GARCH(1,1), APARCH(1,1), stochastic volatility and iid series.

All models are X_t = sigma_t * Z_t. Random numbers come from NumPy's PCG64 via
core.derive_rng(seed, replicate); replicate r of a batch is bitwise identical no
matter which batch (or process) generates it.

Student-t innovations are drawn as N(0,1) / sqrt(chi2_nu / nu); the standardized
variant is multiplied by sqrt((nu - 2) / nu) to have unit variance.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import gamma as gamma_fn

import settings
from core import derive_rng
from errors import InvalidParams

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    GARCH11 = "garch11"
    APARCH11 = "aparch11"
    SV = "sv"
    IID = "iid"


class Innovation(str, Enum):
    STD_T = "std-t"
    RAW_T = "t"
    NORMAL = "normal"
    # symmetric Pareto, P(|Z| > y) = y^-nu for y >= 1
    PARETO = "pareto"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    innovation: Innovation = Innovation.NORMAL
    nu: Optional[float] = None
    omega: Optional[float] = None
    alpha1: float = 0.0
    beta1: float = 0.0
    delta: float = 2.0
    gamma1: float = 0.0
    phi: float = 0.0
    sigma_eta: float = 1.0

    @classmethod
    def garch11(cls, omega, alpha1, beta1, innovation=Innovation.STD_T, nu=4.0) -> "ModelSpec":
        return cls(ModelKind.GARCH11, Innovation(innovation), nu, omega, alpha1, beta1)

    @classmethod
    def aparch11(cls, omega, alpha1, beta1, delta, gamma1, innovation=Innovation.NORMAL, nu=None) -> "ModelSpec":
        return cls(ModelKind.APARCH11, Innovation(innovation), nu, omega, alpha1, beta1, delta, gamma1)

    @classmethod
    def sv(cls, phi, sigma_eta=1.0, innovation=Innovation.RAW_T, nu=2.6) -> "ModelSpec":
        return cls(ModelKind.SV, Innovation(innovation), nu, phi=phi, sigma_eta=sigma_eta)

    @classmethod
    def iid(cls, innovation=Innovation.STD_T, nu=4.0) -> "ModelSpec":
        return cls(ModelKind.IID, Innovation(innovation), nu)

    def validate(self) -> "ModelSpec":
        if self.innovation != Innovation.NORMAL:
            if self.nu is None or not self.nu > 0:
                raise InvalidParams(f"{self.innovation.value} innovations need nu > 0, got {self.nu}")
            if self.innovation == Innovation.STD_T and not self.nu > 2:
                raise InvalidParams(f"Standardized t innovations need nu > 2, got {self.nu}")
        if self.kind in (ModelKind.GARCH11, ModelKind.APARCH11):
            if self.omega is None or not self.omega > 0:
                raise InvalidParams(f"omega must be positive, got {self.omega}")
            if self.alpha1 < 0 or self.beta1 < 0:
                raise InvalidParams(f"alpha1 and beta1 must be nonnegative, got {self.alpha1}, {self.beta1}")
        if self.kind == ModelKind.APARCH11:
            if not self.delta > 0:
                raise InvalidParams(f"delta must be positive, got {self.delta}")
            if not -1 < self.gamma1 < 1:
                raise InvalidParams(f"gamma1 must lie in (-1,1), got {self.gamma1}")
            if not aparch_persistence(self) < 1:
                logger.warning("alpha1 * kappa + beta1 = %.4f >= 1: APARCH is not stationary in sigma^delta",
                               aparch_persistence(self))
        elif self.kind == ModelKind.GARCH11 and self.alpha1 + self.beta1 >= 1:
            logger.warning("alpha1 + beta1 = %.4f >= 1: volatility is not covariance stationary",
                           self.alpha1 + self.beta1)
        if self.kind == ModelKind.SV:
            if not -1 < self.phi < 1:
                raise InvalidParams(f"SV needs |phi| < 1, got {self.phi}")
            if not self.sigma_eta >= 0:
                raise InvalidParams(f"sigma_eta must be nonnegative, got {self.sigma_eta}")
        return self

    def to_config(self) -> Dict[str, str]:
        """Key/value form used by the CLI config file."""
        config = {"MODEL": self.kind.value, "INNOVATION": self.innovation.value}
        fields = asdict(self)
        for key in ("nu", "omega", "alpha1", "beta1", "delta", "gamma1", "phi", "sigma_eta"):
            if fields[key] is not None:
                config[key.upper()] = repr(float(fields[key]))
        return config

    @classmethod
    def from_config(cls, config: Mapping[str, str]) -> "ModelSpec":
        if "MODEL" not in config:
            raise InvalidParams("Config has no MODEL key")
        values = {}
        for key in ("nu", "omega", "alpha1", "beta1", "delta", "gamma1", "phi", "sigma_eta"):
            raw = config.get(key.upper())
            if raw not in (None, ""):
                values[key] = float(raw)
        kind = ModelKind(config["MODEL"])
        innovation = Innovation(config.get("INNOVATION") or Innovation.NORMAL.value)
        return cls(kind=kind, innovation=innovation, **values)


# Study designs and published reference fits (daily log-returns 1990-2010)
GARCH_STUDY = ModelSpec.garch11(0.1, 0.14, 0.84, Innovation.STD_T, 4.0)
SV_STUDY = ModelSpec.sv(0.9, 1.0, Innovation.RAW_T, 2.6)

REFERENCE_FITS: Dict[str, ModelSpec] = {
    "sp500-garch": ModelSpec.garch11(7e-7, 0.062, 0.932, Innovation.NORMAL, None),
    "sp500-aparch": ModelSpec.aparch11(5e-5, 0.056, 0.937, 1.227, 0.874),
    "pg-garch": ModelSpec.garch11(9e-7, 0.04, 0.957, Innovation.NORMAL, None),
    "pg-aparch": ModelSpec.aparch11(17e-5, 0.056, 0.951, 0.938, 0.608),
}

MODEL_PRESETS: Dict[str, ModelSpec] = {"garch-study": GARCH_STUDY, "sv-study": SV_STUDY, **REFERENCE_FITS}


@dataclass(frozen=True)
class SimulationPlan:
    model: ModelSpec
    length: int
    burn_in: int = settings.BURN_IN
    seed: int = settings.DEFAULT_SEED

    def __post_init__(self):
        if self.length < 1 or self.burn_in < 0:
            raise ValueError(f"Invalid plan: length={self.length}, burn_in={self.burn_in}")


@dataclass
class SimulatedPaths:
    """Rows are replicates; columns are time after burn-in."""

    values: np.ndarray
    volatility: np.ndarray
    innovations: np.ndarray


def draw_innovations(rng: np.random.Generator, model: ModelSpec, size: int) -> np.ndarray:
    if model.innovation == Innovation.NORMAL:
        return rng.standard_normal(size)
    if model.innovation == Innovation.PARETO:
        signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return signs * (1.0 - rng.random(size)) ** (-1.0 / model.nu)
    nu = model.nu
    z = rng.standard_normal(size) / np.sqrt(rng.chisquare(nu, size) / nu)
    if model.innovation == Innovation.STD_T:
        z *= np.sqrt((nu - 2.0) / nu)
    return z


def abs_moment(model: ModelSpec, power: float) -> float:
    """E|Z|^power for the innovation law; inf when the moment does not exist."""
    if model.innovation == Innovation.NORMAL:
        return float(2 ** (power / 2) * gamma_fn((power + 1) / 2) / np.sqrt(np.pi))
    nu = model.nu
    if model.innovation == Innovation.PARETO:
        return nu / (nu - power) if power < nu else np.inf
    if power >= nu:
        return np.inf
    moment = nu ** (power / 2) * gamma_fn((power + 1) / 2) * gamma_fn((nu - power) / 2) / (
        np.sqrt(np.pi) * gamma_fn(nu / 2)
    )
    if model.innovation == Innovation.STD_T:
        moment *= ((nu - 2.0) / nu) ** (power / 2)
    return float(moment)


def aparch_persistence(model: ModelSpec) -> float:
    """alpha1 * E(|Z| - gamma1 Z)^delta + beta1; inf when the moment does not exist."""
    # symmetric Z: the two signs contribute (1 -+ gamma1)^delta each
    delta, gamma1 = model.delta, model.gamma1
    kappa = abs_moment(model, delta) * ((1 - gamma1) ** delta + (1 + gamma1) ** delta) / 2
    return float(model.alpha1 * kappa + model.beta1)


def initial_power_volatility(model: ModelSpec) -> float:
    """Starting value of sigma^2 (GARCH) or sigma^delta (APARCH).

    GARCH starts at omega / (1 - alpha1 - beta1). APARCH uses omega / (1 - beta1),
    which needs no innovation moment; the burn-in removes the difference.
    Both fall back to omega when the denominator is not positive.
    """
    if model.kind == ModelKind.GARCH11:
        persistence = model.alpha1 + model.beta1
        return model.omega / (1.0 - persistence) if persistence < 1 else model.omega
    return model.omega / (1.0 - model.beta1) if model.beta1 < 1 else model.omega


def _volatility_recursion(model: ModelSpec, z: np.ndarray):
    rows, total = z.shape
    x = np.empty_like(z)
    sigma = np.empty_like(z)
    state = np.full(rows, initial_power_volatility(model))
    if model.kind == ModelKind.GARCH11:
        for s in range(total):
            sigma[:, s] = np.sqrt(state)
            x[:, s] = sigma[:, s] * z[:, s]
            state = model.omega + model.alpha1 * x[:, s] ** 2 + model.beta1 * state
    else:
        inv_delta = 1.0 / model.delta
        for s in range(total):
            sigma[:, s] = state**inv_delta
            x[:, s] = sigma[:, s] * z[:, s]
            shock = np.abs(x[:, s]) - model.gamma1 * x[:, s]
            state = model.omega + model.alpha1 * shock**model.delta + model.beta1 * state
    return x, sigma


def simulate_paths(model: ModelSpec, length: int, burn_in: int, seed: int, replicates: Sequence[int]) -> SimulatedPaths:
    """Simulate one path per replicate id, vectorized across replicates."""
    model.validate()
    total = length + burn_in
    rows = len(replicates)
    z = np.empty((rows, total))
    eta = np.empty((rows, total)) if model.kind == ModelKind.SV else None
    start = np.empty(rows)
    for row, replicate in enumerate(replicates):
        rng = derive_rng(seed, replicate)
        z[row] = draw_innovations(rng, model, total)
        if eta is not None:
            eta[row] = rng.standard_normal(total)
            start[row] = rng.normal(0.0, model.sigma_eta / np.sqrt(1.0 - model.phi**2))

    if model.kind == ModelKind.IID:
        sigma = np.ones_like(z)
        x = z.copy()
    elif model.kind == ModelKind.SV:
        # log sigma_t = phi log sigma_{t-1} + sigma_eta * eps_t, started from its stationary law
        drive = model.sigma_eta * eta
        drive[:, 0] = start
        log_sigma = lfilter([1.0], [1.0, -model.phi], drive, axis=1)
        sigma = np.exp(log_sigma)
        x = sigma * z
    else:
        x, sigma = _volatility_recursion(model, z)

    if not np.all(sigma > 0):
        raise InvalidParams(f"{model.kind.value}: volatility became nonpositive or non-finite")
    return SimulatedPaths(x[:, burn_in:], sigma[:, burn_in:], z[:, burn_in:])


def simulate_batch(model: ModelSpec, length: int, burn_in: int, seed: int, replicates: Sequence[int]) -> np.ndarray:
    return simulate_paths(model, length, burn_in, seed, replicates).values


def simulate(plan: SimulationPlan) -> np.ndarray:
    return simulate_batch(plan.model, plan.length, plan.burn_in, plan.seed, [0])[0]


def volatility_filter(x, model: ModelSpec) -> np.ndarray:
    """Run the GARCH/APARCH volatility recursion forward on observed returns."""
    if model.kind not in (ModelKind.GARCH11, ModelKind.APARCH11):
        raise InvalidParams(f"Volatility filtering needs a garch11 or aparch11 model, got {model.kind.value}")
    model.validate()
    x = np.asarray(x, dtype=float)
    # state_t = c_t + beta1 * state_{t-1}, a linear filter once the shocks are known
    drive = np.empty_like(x)
    drive[0] = initial_power_volatility(model)
    if model.kind == ModelKind.GARCH11:
        drive[1:] = model.omega + model.alpha1 * x[:-1] ** 2
        return np.sqrt(lfilter([1.0], [1.0, -model.beta1], drive))
    shock = np.abs(x[:-1]) - model.gamma1 * x[:-1]
    drive[1:] = model.omega + model.alpha1 * shock**model.delta
    return lfilter([1.0], [1.0, -model.beta1], drive) ** (1.0 / model.delta)


def residuals(x, model: ModelSpec) -> np.ndarray:
    """Z_t = X_t / sigma_t under the given volatility model."""
    return np.asarray(x, dtype=float) / volatility_filter(x, model)
