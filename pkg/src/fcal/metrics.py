"""Calibration metrics.

ECE and MCE are computed over ``S`` equal-probability bins of a target
distribution: samples are pushed through the target CDF and binned uniformly
on [0, 1], so a perfectly calibrated sample puts ``1/S`` of its mass in every
bin. A value landing exactly on an edge goes to the upper bin.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .distmath import Rng, chi2_cdf, std_normal_cdf, std_normal_inv_cdf
from .errors import ConfigError, ContractError
from .losses import (
    build_hyperconstraints,
    divergence_to_target,
    empirical_gaussian_stats,
    nll_loss,
    residuals,
    smooth_l1,
)
from .params import GaussianParams

EVAL_SEED = 20211
CONSISTENCY_LEVELS = (0.7, 0.8, 0.9, 0.95)
CDF = Callable[[np.ndarray], np.ndarray]


def _bin_counts(samples, target_cdf: CDF, S: int) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ContractError("no samples to bin")
    if S < 2:
        raise ContractError(f"need at least 2 bins, got {S}")
    u = np.asarray(target_cdf(x), dtype=float)
    b = np.minimum(np.floor(u * S).astype(np.int64), S - 1)
    return np.bincount(b, minlength=S)


def bin_frequencies(samples, target_cdf: CDF, S: int = 10) -> np.ndarray:
    c = _bin_counts(samples, target_cdf, S)
    return c / c.sum()


def ece(samples, target_cdf: CDF = std_normal_cdf, S: int = 10) -> float:
    """sum_s (|B_s| / P) * |1/S - |B_s| / P|."""
    f = bin_frequencies(samples, target_cdf, S)
    return float(np.sum(f * np.abs(1.0 / S - f)))


def mce(samples, target_cdf: CDF = std_normal_cdf, S: int = 10) -> float:
    f = bin_frequencies(samples, target_cdf, S)
    return float(np.max(np.abs(1.0 / S - f)))


@dataclass
class ReliabilityCurve:
    expected: np.ndarray    # s / S for s = 1..S
    empirical: np.ndarray   # cumulative fraction of samples in bins 1..s
    frequencies: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.expected.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_index", "expected_cum", "empirical_cum"])
        for i, (e, m) in enumerate(zip(self.expected, self.empirical)):
            w.writerow([i, _fmt(e), _fmt(m)])
        return buf.getvalue()


def reliability_curve(samples, target_cdf: CDF = std_normal_cdf, S: int = 10) -> ReliabilityCurve:
    c = _bin_counts(samples, target_cdf, S)
    cum = np.cumsum(c) / c.sum()
    cum[-1] = 1.0
    return ReliabilityCurve(np.arange(1, S + 1) / S, cum, c / c.sum())


def eval_divergences(q, K: int) -> tuple[float, float]:
    """(KL, W) between the empirical Gaussian fit of ``q`` and N(K, 2K)."""
    stats = empirical_gaussian_stats(np.asarray(q, dtype=float))
    return (float(divergence_to_target(stats, K, "kl")),
            float(divergence_to_target(stats, K, "wass")))


def consistency_rate(z, c: float) -> float:
    """Fraction of residuals inside the central ``c`` interval of N(0, 1)."""
    if not 0.0 < c < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {c}")
    z = np.asarray(z, dtype=float)
    bound = std_normal_inv_cdf((1.0 + c) / 2.0)
    return float(np.mean(np.abs(z) <= bound))


@dataclass
class EvalConfig:
    K: int = 64
    H: int = 512
    S: int = 10
    eval_seed: int = EVAL_SEED
    smooth_l1_delta: float = 1.0


@dataclass
class MetricsReport:
    ece_z: float
    ece_q: float
    mce_z: float
    mce_q: float
    nll: float
    kld_q: float
    w_dist_q: float
    consistency: dict
    smooth_l1: float
    smooth_l1_gt: float | None
    n_residuals: int
    reliability_z: ReliabilityCurve = field(repr=False)
    reliability_q: ReliabilityCurve = field(repr=False)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("reliability_z", "reliability_q", "extra")}
        d["consistency"] = {f"{c:g}": v for c, v in self.consistency.items()}
        d.update(self.extra)
        return _round_floats(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _round_floats(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj


def report_from_predictions(pred: GaussianParams, y, config: EvalConfig, y_clean=None) -> MetricsReport:
    """All metrics for one set of predictions; deterministic given ``config.eval_seed``."""
    y = np.asarray(y, dtype=float)
    z = residuals(pred, y).z
    hc = build_hyperconstraints(residuals(pred, y), config.K, config.H, Rng(config.eval_seed))
    q = np.asarray(hc.q)

    def q_cdf(x):
        return chi2_cdf(x, config.K)

    try:
        kld, wd = eval_divergences(q, config.K)
    except ValueError:
        kld, wd = float("inf"), float("nan")
    return MetricsReport(
        ece_z=ece(z, std_normal_cdf, config.S),
        ece_q=ece(q, q_cdf, config.S),
        mce_z=mce(z, std_normal_cdf, config.S),
        mce_q=mce(q, q_cdf, config.S),
        nll=float(nll_loss(pred, y)),
        kld_q=kld,
        w_dist_q=wd,
        consistency={c: consistency_rate(z, c) for c in CONSISTENCY_LEVELS},
        smooth_l1=float(smooth_l1(pred.mu, y, config.smooth_l1_delta)),
        smooth_l1_gt=None if y_clean is None else float(smooth_l1(pred.mu, np.asarray(y_clean, float), config.smooth_l1_delta)),
        n_residuals=int(z.shape[0]),
        reliability_z=reliability_curve(z, std_normal_cdf, config.S),
        reliability_q=reliability_curve(q, q_cdf, config.S),
    )


def evaluate(model, split, config: EvalConfig | None = None) -> MetricsReport:
    """Metrics of ``model`` (anything with ``predict(features)``) on a dataset split."""
    config = config or EvalConfig()
    if len(split) == 0:
        raise ContractError("empty split")
    pred = model.predict(split.features)
    return report_from_predictions(pred, split.y_noisy, config, y_clean=split.y_clean)
