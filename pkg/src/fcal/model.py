"""Heteroscedastic MLP regressor with a bounded sigma head.

The network maps a feature vector to ``2 * output_dim`` numbers: the first
half are means, the second half pass through a generalized sigmoid
``alpha + (beta - alpha) / (1 + exp(-eta * s))`` floored at
``alpha + sigma_floor`` to give standard deviations.

Inputs and mean outputs go through fixed affine normalizers (``x_shift``,
``x_scale``, ``y_shift``, ``y_scale``) that are stored with the weights but
never trained; sigma is produced directly in label units.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .distmath import Rng
from .errors import ConfigError, ContractError, DataFormatError, DomainError, TrainingError
from .losses import LossSpec, objective
from .params import GaussianParams

CHECKPOINT_VERSION = 1
DEFAULT_SIGMA_HEAD = (0.0, 50.0, 0.15)
DEFAULT_SIGMA_FLOOR = 1e-3


def param_count(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


@dataclass
class MLPRegressor:
    layer_sizes: list[int]
    params: np.ndarray
    sigma_head: tuple[float, float, float] = DEFAULT_SIGMA_HEAD
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    x_shift: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_shift: np.ndarray | None = None
    y_scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        _validate(self.layer_sizes, self.sigma_head)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.layer_sizes),):
            raise ConfigError(f"expected {param_count(self.layer_sizes)} parameters, got {self.params.shape}")
        d, k = self.input_dim, self.output_dim
        self.x_shift = _vec(self.x_shift, d, 0.0)
        self.x_scale = _vec(self.x_scale, d, 1.0)
        self.y_shift = _vec(self.y_shift, k, 0.0)
        self.y_scale = _vec(self.y_scale, k, 1.0)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1] // 2

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    @property
    def sigma_min(self) -> float:
        return self.sigma_head[0] + self.sigma_floor

    def with_params(self, params: np.ndarray) -> "MLPRegressor":
        return dataclasses.replace(self, params=np.asarray(params, dtype=np.float64))

    def predict(self, x) -> GaussianParams:
        """Numpy forward pass (no tape)."""
        return _forward(self, np.asarray(x, dtype=float), self.params)


def _vec(v, n: int, fill: float) -> np.ndarray:
    if v is None:
        return np.full(n, fill)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (n,):
        raise ConfigError(f"normalizer has shape {v.shape}, expected ({n},)")
    return v


def _validate(layer_sizes, sigma_head) -> None:
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise ConfigError(f"invalid layer sizes {layer_sizes}")
    if layer_sizes[-1] % 2:
        raise ConfigError("last layer size must be 2 * output_dim")
    alpha, beta, eta = sigma_head
    if not (alpha >= 0 and beta > alpha and eta > 0):
        raise ConfigError(f"sigma head needs 0 <= alpha < beta and eta > 0, got {sigma_head}")


def init(seed: int, layer_sizes, sigma_head=DEFAULT_SIGMA_HEAD,
         sigma_floor: float = DEFAULT_SIGMA_FLOOR, **normalizers) -> MLPRegressor:
    """Weights uniform in +-sqrt(6 / fan_in), biases zero."""
    layer_sizes = [int(s) for s in layer_sizes]
    _validate(layer_sizes, tuple(sigma_head))
    rng = Rng(seed)
    chunks = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        chunks.append(rng.generator.uniform(-bound, bound, fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return MLPRegressor(layer_sizes, np.concatenate(chunks), tuple(float(s) for s in sigma_head),
                        float(sigma_floor), **normalizers)


def init_for_data(seed: int, x, y, hidden=(32, 32), sigma_head=DEFAULT_SIGMA_HEAD,
                  sigma_floor: float = DEFAULT_SIGMA_FLOOR, scale_labels: bool = False) -> MLPRegressor:
    """``init`` with normalizers fixed from training-set moments.

    Inputs are standardized. Mean outputs are only re-centred by default:
    sigma lives in label units, and rescaling the mean head alone would make
    it far more sensitive than the sigma head to any loss acting on
    ``(y - mu) / sigma``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sizes = [x.shape[1], *hidden, 2 * y.shape[1]]
    y_scale = y.std(0) if scale_labels else None
    return init(seed, sizes, sigma_head, sigma_floor,
                x_shift=x.mean(0), x_scale=x.std(0), y_shift=y.mean(0), y_scale=y_scale)


def _layers(layer_sizes, params):
    off = 0
    for a, b in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = params[off:off + a * b].reshape(a, b)
        off += a * b
        yield w, params[off:off + b]
        off += b


def _forward(model: MLPRegressor, x, params) -> GaussianParams:
    h = (x - model.x_shift) / model.x_scale
    layers = list(_layers(model.layer_sizes, params))
    for i, (w, b) in enumerate(layers):
        h = ad.affine(h, w, b)
        if i < len(layers) - 1:
            h = ad.relu(h)
    k = model.output_dim
    mu = h[..., :k] * model.y_scale + model.y_shift
    alpha, beta, eta = model.sigma_head
    sigma = ad.clamp_min(ad.gsigmoid(h[..., k:], alpha, beta, eta), model.sigma_min)
    return GaussianParams(mu, sigma)


def forward(model: MLPRegressor, x, tape: ad.Tape, params: ad.Vec | None = None) -> GaussianParams:
    """Record the forward pass on ``tape``; ``x`` is one sample or a (B, d) batch.

    ``params`` are the tape leaves holding the weights (created if omitted).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim or x.ndim not in (1, 2):
        raise ContractError(f"expected input of width {model.input_dim}, got shape {x.shape}")
    if params is None:
        params = tape.var(model.params)
    return _forward(model, x, params)


class SGDMomentum:
    """Heavy-ball SGD: v <- m v + g; p <- p - lr v."""

    def __init__(self, lr: float = 1e-3, momentum: float = 0.9, clip_norm: float | None = None):
        if lr < 0 or not 0 <= momentum < 1:
            raise ConfigError(f"invalid optimizer settings lr={lr}, momentum={momentum}")
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.clip_norm is not None:
            norm = float(np.sqrt(np.dot(grad, grad)))
            if norm > self.clip_norm:
                grad = grad * (self.clip_norm / norm)
        if self.velocity is None:
            self.velocity = np.zeros_like(params)
        self.velocity = self.momentum * self.velocity + grad
        if self.lr == 0:
            return params
        return params - self.lr * self.velocity

    def state_dict(self) -> dict:
        return {"lr": self.lr, "momentum": self.momentum, "clip_norm": self.clip_norm}


def loss_and_grad(model: MLPRegressor, x, y, spec: LossSpec, rng: Rng) -> tuple[float, np.ndarray, dict]:
    tape = ad.Tape()
    p = tape.var(model.params)
    pred = forward(model, x, tape, p)
    total, parts = objective(pred, np.asarray(y, dtype=float), spec, rng)
    grads = tape.backward(total)
    return float(total.value), grads[p], {k: float(v.value) for k, v in parts.items()}


def train_step(model: MLPRegressor, batch, spec: LossSpec, optimizer: SGDMomentum, rng: Rng,
               batch_index: int | None = None) -> tuple[MLPRegressor, float]:
    """One gradient step on ``batch = (x, y)``; returns the updated model and the batch loss."""
    x, y = batch
    n_components = np.asarray(y).size
    if spec.uses_fcal and n_components < spec.K:
        raise ContractError(f"batch has {n_components} residuals, fewer than K={spec.K}")
    try:
        loss, grad, _ = loss_and_grad(model, x, y, spec, rng)
    except DomainError as exc:
        # parameters have already blown up; report where it happened
        raise TrainingError(f"loss undefined at batch {batch_index}: {exc}", batch_index) from exc
    if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite loss {loss} at batch {batch_index}", batch_index)
    return model.with_params(optimizer.step(model.params, grad)), loss


@dataclass
class EpochRecord:
    epoch: int
    emp_risk: float
    fcal_loss: float
    combined: float


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 512
    lr: float = 1e-3
    momentum: float = 0.9
    clip_norm: float | None = None
    seed: int = 0
    eval_seed: int = 20211
    extra: dict = field(default_factory=dict, repr=False)


def evaluate_objective(model: MLPRegressor, x, y, spec: LossSpec, eval_seed: int) -> EpochRecord:
    """Empirical risk, f-Cal term and combined loss over a whole split (numpy path)."""
    from .losses import empirical_risk, fcal_loss, combined_loss

    pred = model.predict(x)
    y = np.asarray(y, dtype=float)
    emp = float(empirical_risk(pred, y, spec))
    try:
        fc = float(fcal_loss(pred, y, spec, Rng(eval_seed)))
    except ContractError:
        fc = float("nan")
    comb = emp if spec.lam == 0 else float(combined_loss(emp, fc, spec.lam))
    return EpochRecord(0, emp, fc, comb)


def fit(model: MLPRegressor, x, y, spec: LossSpec, config: TrainConfig, log=None) -> tuple[MLPRegressor, list[EpochRecord]]:
    """Minibatch training; returns the final model and one record per epoch (epoch 0 = start)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    per_sample = y[0].size
    opt = SGDMomentum(config.lr, config.momentum, config.clip_norm)
    rng = Rng(config.seed)
    history = []

    def record(epoch):
        try:
            rec = evaluate_objective(model, x, y, spec, config.eval_seed)
        except DomainError as exc:
            raise TrainingError(f"objective undefined after epoch {epoch} (batch {step - 1}): {exc}",
                                step - 1) from exc
        rec.epoch = epoch
        history.append(rec)
        if log is not None:
            log(rec)

    step = 0
    record(0)
    for epoch in range(1, config.epochs + 1):
        order = rng.child(1, epoch).generator.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            if spec.uses_fcal and idx.size * per_sample < spec.K:
                continue  # trailing batch too small to form a hyper-constraint
            model, _ = train_step(model, (x[idx], y[idx]), spec, opt, rng.child(2, epoch, b), batch_index=step)
            step += 1
        record(epoch)
    return model, history


def save_checkpoint(model: MLPRegressor, path, extra: dict | None = None) -> None:
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "layer_sizes": model.layer_sizes,
        "sigma_head": list(model.sigma_head),
        "sigma_floor": model.sigma_floor,
        "x_shift": model.x_shift.tolist(),
        "x_scale": model.x_scale.tolist(),
        "y_shift": model.y_shift.tolist(),
        "y_scale": model.y_scale.tolist(),
        "params": model.params.tolist(),
    }
    if extra:
        blob["extra"] = extra
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> MLPRegressor:
    try:
        blob = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"checkpoint version {blob.get('format_version')} != {CHECKPOINT_VERSION}")
    try:
        return MLPRegressor(
            blob["layer_sizes"], np.array(blob["params"], dtype=np.float64),
            tuple(blob["sigma_head"]), blob["sigma_floor"],
            x_shift=blob["x_shift"], x_scale=blob["x_scale"],
            y_shift=blob["y_shift"], y_scale=blob["y_scale"],
        )
    except (KeyError, ConfigError) as exc:
        raise DataFormatError(f"malformed checkpoint {path}: {exc}") from exc
