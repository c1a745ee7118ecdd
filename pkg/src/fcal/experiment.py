"""Two-stage training protocol shared by the CLI sweeps and the acceptance checks.

Every arm of a comparison starts from the same NLL-trained weights and is then
trained for the same number of epochs, with the same batch order, under its
own loss. Only the loss differs between arms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as M
from .losses import LossSpec
from .metrics import EvalConfig, MetricsReport, evaluate
from .synthdata import SynthDataset

LOSS_NAMES = ("nll", "fcal-kl", "fcal-wass", "calibration-loss")


@dataclass
class Protocol:
    hidden: tuple[int, ...] = (32, 32)
    batch_size: int = 512
    momentum: float = 0.9
    clip_norm: float | None = 10.0
    pretrain_epochs: int = 150
    pretrain_lr: float = 1e-2
    finetune_epochs: int = 100
    finetune_lr: float = 3e-3
    K: int = 64
    H: int = 64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class ArmResult:
    name: str
    spec: LossSpec
    report: MetricsReport
    model: M.MLPRegressor = field(repr=False)


def loss_spec(loss: str, lam: float, K: int = 64, H: int = 64, emp_risk: str = "nll") -> LossSpec:
    """LossSpec for a named loss; ``nll`` ignores ``lam``."""
    if loss == "nll":
        return LossSpec(lam=0.0, K=K, H=H, emp_risk=emp_risk)
    if loss == "calibration-loss":
        return LossSpec(lam=lam, K=K, H=H, emp_risk=emp_risk, calibration="per-sample")
    if loss in ("fcal-kl", "fcal-wass"):
        return LossSpec(lam=lam, K=K, H=H, emp_risk=emp_risk, divergence=loss[5:])
    raise ValueError(f"unknown loss {loss!r}")


def pretrain(ds: SynthDataset, seed: int, proto: Protocol) -> M.MLPRegressor:
    tr = ds.train
    m0 = M.init_for_data(seed, tr.features, tr.y_noisy, hidden=proto.hidden)
    cfg = M.TrainConfig(epochs=proto.pretrain_epochs, batch_size=proto.batch_size, lr=proto.pretrain_lr,
                        momentum=proto.momentum, clip_norm=proto.clip_norm, seed=seed)
    model, _ = M.fit(m0, tr.features, tr.y_noisy, LossSpec(K=proto.K, H=proto.H), cfg)
    return model


def finetune(base: M.MLPRegressor, ds: SynthDataset, spec: LossSpec, seed: int, proto: Protocol) -> M.MLPRegressor:
    tr = ds.train
    cfg = M.TrainConfig(epochs=proto.finetune_epochs, batch_size=proto.batch_size, lr=proto.finetune_lr,
                        momentum=proto.momentum, clip_norm=proto.clip_norm, seed=seed + 1000)
    model, _ = M.fit(base, tr.features, tr.y_noisy, spec, cfg)
    return model


def run_arms(ds: SynthDataset, seed: int, arms: dict[str, LossSpec], proto: Protocol,
             eval_config: EvalConfig | None = None, base: M.MLPRegressor | None = None) -> dict[str, ArmResult]:
    """Pretrain once (unless ``base`` is given), fine-tune every arm, evaluate on test."""
    base = pretrain(ds, seed, proto) if base is None else base
    out = {}
    for name, spec in arms.items():
        m = finetune(base, ds, spec, seed, proto)
        out[name] = ArmResult(name, spec, evaluate(m, ds.test, eval_config), m)
    return out


def pct_drop(value: float, baseline: float) -> float:
    """Relative increase of an error metric over its baseline, in percent."""
    return 100.0 * (value - baseline) / baseline


def median(values) -> float:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    return float(np.median(v)) if v.size else float("nan")
