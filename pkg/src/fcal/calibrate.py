"""Post-hoc temperature scaling and PIT canonicalization.

``pit_canonicalize`` maps labels through their own predictive CDF and then
through the standard normal quantile, so residuals of any continuous
predictive family become N(0, 1) under calibration and can feed the same
hyper-constraint machinery as Gaussian residuals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DomainError
from .losses import ResidualBatch, nll_loss
from .params import GaussianParams, values_of

PIT_EPS = 1e-9
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class NumericWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TemperatureModel:
    """Multiplies every predicted sigma by ``t``."""

    t: float = 1.0

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise DomainError(f"temperature must be > 0, got {self.t}")

    def apply(self, params: GaussianParams) -> GaussianParams:
        return GaussianParams(params.mu, params.sigma * self.t)

    def predict_with(self, model):
        return _Scaled(model, self)


class _Scaled:
    def __init__(self, model, temp: TemperatureModel):
        self.model = model
        self.temperature = temp

    def predict(self, features) -> GaussianParams:
        return self.temperature.apply(self.model.predict(features))


def scaled_nll(t: float, params: GaussianParams, y) -> float:
    return float(nll_loss(GaussianParams(params.mu, params.sigma * t), y))


def fit_temperature(params_val: GaussianParams, y_val, lo: float = 1e-3, hi: float = 1e3,
                    tol: float = 1e-6) -> TemperatureModel:
    """Golden-section search for the NLL-minimizing ``t`` over log t in [log lo, log hi].

    The objective is convex in log t, so the bracket always holds the minimum.
    Iterates until the bracket in t is narrower than ``tol``.
    """
    y_val = np.asarray(y_val, dtype=float)
    if y_val.size == 0:
        raise ContractError("validation set is empty")
    mu = np.asarray(params_val.mu, dtype=float)
    sigma = np.asarray(params_val.sigma, dtype=float)
    if not np.all(sigma > 0):
        raise DomainError("sigma must be strictly positive")
    z2 = np.mean(np.square((y_val - mu) / sigma))
    log_s2 = np.mean(np.log(np.square(sigma)))

    def f(s):  # mean NLL at t = exp(s), reduced to its closed form
        return 0.5 * (z2 * math.exp(-2.0 * s) + 2.0 * s + log_s2)

    a, b = math.log(lo), math.log(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while math.exp(b) - math.exp(a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return TemperatureModel(math.exp(0.5 * (a + b)))


def closed_form_temperature(params_val: GaussianParams, y_val) -> float:
    """sqrt(mean(z^2)), the exact minimizer for Gaussian NLL."""
    z = (np.asarray(y_val, float) - np.asarray(params_val.mu, float)) / np.asarray(params_val.sigma, float)
    return float(np.sqrt(np.mean(np.square(z))))


@dataclass
class PredictiveFamily:
    """A per-sample continuous predictive distribution.

    ``kind`` is ``"gaussian"`` (params ``mu``, ``sigma``) or ``"laplace"``
    (params ``loc``, ``scale``). Parameters may be arrays or tape values.
    """

    kind: str
    loc: Any
    scale: Any

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "laplace"):
            raise ContractError(f"unsupported family {self.kind!r}")
        if not np.all(values_of(self.scale) > 0):
            raise DomainError("family scale must be strictly positive")

    @classmethod
    def gaussian(cls, mu, sigma) -> "PredictiveFamily":
        return cls("gaussian", mu, sigma)

    @classmethod
    def laplace(cls, loc, scale) -> "PredictiveFamily":
        return cls("laplace", loc, scale)

    def cdf(self, y):
        u = (y - self.loc) / self.scale
        if self.kind == "gaussian":
            return ad.ndtr(u)
        return ad.laplace_cdf_std(u)


def pit_canonicalize(y, family: PredictiveFamily) -> ResidualBatch:
    """z = Phi^{-1}(S(y)) with S clamped to [PIT_EPS, 1 - PIT_EPS]."""
    s = family.cdf(y)
    sv = values_of(s)
    if np.any((sv < PIT_EPS) | (sv > 1.0 - PIT_EPS)):
        warnings.warn("CDF values clamped to the PIT window", NumericWarning, stacklevel=2)
    z = ad.ndtri(ad.clip(s, PIT_EPS, 1.0 - PIT_EPS))
    z = z.ravel() if hasattr(z, "tape") else np.ravel(z)
    return ResidualBatch(z)
