"""Training objectives.

All functions accept plain arrays or tape values (``Vec``); the same code path
produces evaluation numbers and differentiable training losses.

The calibration term follows the chi-squared hyper-constraint construction:
canonical residuals ``z = (y - mu) / sigma`` are grouped ``K`` at a time into
``H`` sums of squares ``q``, whose empirical mean/variance is compared with the
``N(K, 2K)`` surrogate of chi^2_K by a closed-form divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import autodiff as ad
from .distmath import Rng
from .errors import ConfigError, ContractError, DomainError
from .params import GaussianParams, shape_of, values_of

DIVERGENCES = ("kl", "wass")
EMP_RISKS = ("nll", "smooth-l1")
CALIBRATION_TERMS = ("fcal", "per-sample")


@dataclass
class ResidualBatch:
    z: Any

    def __len__(self) -> int:
        return shape_of(self.z)[0]


@dataclass
class HyperConstraintSet:
    q: Any
    dof: int
    index: np.ndarray  # (H, K) residual indices, distinct within a row

    def __len__(self) -> int:
        return self.index.shape[0]


@dataclass
class EmpiricalGaussianStats:
    mean: Any
    variance: Any
    count: int

    def as_pair(self) -> tuple:
        return (self.mean, self.variance)


@dataclass
class LossSpec:
    """What ``train_step`` minimizes: ``(1 - lam) * emp_risk + lam * calibration``."""

    lam: float = 0.0
    divergence: str = "kl"
    K: int = 64
    H: int = 64
    emp_risk: str = "nll"
    calibration: str = "fcal"
    smooth_l1_delta: float = 1.0
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.divergence not in DIVERGENCES:
            raise ConfigError(f"divergence must be one of {DIVERGENCES}, got {self.divergence!r}")
        if self.emp_risk not in EMP_RISKS:
            raise ConfigError(f"empirical risk must be one of {EMP_RISKS}, got {self.emp_risk!r}")
        if self.calibration not in CALIBRATION_TERMS:
            raise ConfigError(f"calibration term must be one of {CALIBRATION_TERMS}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if int(self.H) != self.H or self.H < 2:
            raise ConfigError(f"H must be an integer >= 2, got {self.H}")
        if not self.smooth_l1_delta > 0:
            raise ConfigError("smooth-L1 delta must be > 0")

    @property
    def uses_fcal(self) -> bool:
        return self.lam > 0 and self.calibration == "fcal"


def _check_sigma(sigma) -> None:
    if not np.all(values_of(sigma) > 0):
        raise DomainError("sigma must be strictly positive")


def nll_loss(params: GaussianParams, y) -> Any:
    """Batch mean of 0.5 * ((y - mu)^2 / sigma^2 + log sigma^2)."""
    _check_sigma(params.sigma)
    var = ad.square(params.sigma)
    terms = (ad.square(y - params.mu) / var + ad.log(var)) * 0.5
    return ad.mean(terms)


def residuals(params: GaussianParams, y) -> ResidualBatch:
    """Canonical residuals, flattened componentwise."""
    _check_sigma(params.sigma)
    z = (y - params.mu) / params.sigma
    z = z.ravel() if hasattr(z, "tape") else np.ravel(z)
    return ResidualBatch(z)


def draw_constraint_indices(n: int, K: int, H: int, rng: Rng) -> np.ndarray:
    """(H, K) indices; each row a uniform K-subset of range(n), rows independent."""
    keys = rng.generator.random((H, n))
    return np.argpartition(keys, K - 1, axis=1)[:, :K]


def build_hyperconstraints(z: ResidualBatch, K: int, H: int, rng: Rng,
                           index: np.ndarray | None = None) -> HyperConstraintSet:
    """q_i = sum of K squared residuals drawn without replacement.

    Pass ``index`` to reuse a fixed assignment instead of drawing one.
    """
    n = len(z)
    if H < 2:
        raise ContractError(f"need H >= 2 hyper-constraints, got {H}")
    if n < K:
        raise ContractError(f"need at least K={K} residuals, got {n}")
    if index is None:
        index = draw_constraint_indices(n, K, H, rng)
    index = np.asarray(index)
    sq = ad.square(z.z)
    q = ad.total(sq[index], axis=1)
    return HyperConstraintSet(q, K, index)


def empirical_gaussian_stats(q) -> EmpiricalGaussianStats:
    """Mean and unbiased (H - 1) variance."""
    h = shape_of(q)[0]
    if h < 2:
        raise ContractError(f"need at least 2 samples, got {h}")
    m = ad.total(q) / float(h)
    v = ad.total(ad.square(q - m)) / float(h - 1)
    return EmpiricalGaussianStats(m, v, h)


def _check_var(*vs) -> None:
    for v in vs:
        if not np.all(values_of(v) > 0):
            raise DomainError("variances must be strictly positive")


def kl_gaussians(p: tuple, q: tuple) -> Any:
    """KL(p || q) for univariate normals given as (mean, variance)."""
    (mp, vp), (mq, vq) = p, q
    _check_var(vp, vq)
    return ad.log(vq / vp) * 0.5 + (vp + ad.square(mp - mq)) / (2.0 * vq) - 0.5


def wass_gaussians(p: tuple, q: tuple) -> Any:
    """Squared 2-Wasserstein distance (dmu)^2 + (dsigma)^2 for (mean, variance) pairs."""
    (mp, vp), (mq, vq) = p, q
    if np.any(values_of(vp) < 0) or np.any(values_of(vq) < 0):
        raise DomainError("variances must be non-negative")
    return ad.square(mp - mq) + ad.square(ad.sqrt(vp) - ad.sqrt(vq))


def divergence_to_target(stats: EmpiricalGaussianStats, K: int, divergence: str) -> Any:
    """D(empirical || N(K, 2K))."""
    target = (float(K), 2.0 * K)
    if divergence == "kl":
        return kl_gaussians(stats.as_pair(), target)
    if divergence == "wass":
        return wass_gaussians(stats.as_pair(), target)
    raise ConfigError(f"unknown divergence {divergence!r}")


def fcal_from_residuals(z: ResidualBatch, K: int, H: int, divergence: str, rng: Rng,
                        index: np.ndarray | None = None) -> Any:
    hc = build_hyperconstraints(z, K, H, rng, index=index)
    return divergence_to_target(empirical_gaussian_stats(hc.q), K, divergence)


def fcal_loss(params: GaussianParams, y, spec: LossSpec, rng: Rng,
              index: np.ndarray | None = None) -> Any:
    """f-Cal calibration term for Gaussian predictions."""
    return fcal_from_residuals(residuals(params, y), spec.K, spec.H, spec.divergence, rng, index)


def combined_loss(emp_risk, fcal, lam: float) -> Any:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return emp_risk
    if lam == 1.0:
        return fcal
    return emp_risk * (1.0 - lam) + fcal * lam


def per_sample_calibration_loss(params: GaussianParams, y) -> Any:
    """Batch mean of ((y - mu)^2 - sigma^2)^2."""
    _check_sigma(params.sigma)
    return ad.mean(ad.square(ad.square(y - params.mu) - ad.square(params.sigma)))


def smooth_l1(pred, y, delta: float = 1.0) -> Any:
    """Huber form: 0.5 e^2 / delta for |e| < delta, |e| - delta / 2 otherwise."""
    if not delta > 0:
        raise DomainError("delta must be > 0")
    a = ad.absolute(pred - y)
    m = delta - ad.relu(delta - a)  # min(|e|, delta)
    return ad.mean(ad.square(m) / (2.0 * delta) + (a - m))


def empirical_risk(params: GaussianParams, y, spec: LossSpec) -> Any:
    if spec.emp_risk == "nll":
        return nll_loss(params, y)
    return smooth_l1(params.mu, y, spec.smooth_l1_delta)


def objective(params: GaussianParams, y, spec: LossSpec, rng: Rng) -> tuple[Any, dict]:
    """Total loss and its parts for one batch.

    The calibration term is only built when ``lam > 0``.
    """
    emp = empirical_risk(params, y, spec)
    parts = {"emp_risk": emp}
    if spec.lam == 0.0:
        return emp, parts
    if spec.calibration == "fcal":
        cal = fcal_loss(params, y, spec, rng)
    else:
        cal = per_sample_calibration_loss(params, y)
    parts["calibration"] = cal
    return combined_loss(emp, cal, spec.lam), parts
