"""Disc-tracking regression benchmark with known label noise.

Each sample places a target disc and ``n_distractors`` distractor discs on a
square canvas. Features are the discs' (x, y, r) triples, target first; the
label is the target centre plus noise whose scale grows as distractors get
close to (or overlap) the target. Because the noise scale of every sample is
stored, an oracle predictor with perfect calibration can be built for any
split.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .distmath import Rng, sample_gamma, sample_laplace
from .errors import ConfigError, DataFormatError
from .params import GaussianParams

FORMAT_VERSION = 1
NOISE_KINDS = ("homo", "hetero", "gamma", "laplace")
SPLITS = ("train", "val", "test")


@dataclass
class SynthConfig:
    n_samples: int = 5000
    n_distractors: int = 5
    noise: str = "hetero"
    sigma: float = 2.0          # homoscedastic noise scale
    sigma_min: float = 1.0
    sigma_range: float = 4.0
    gamma_shape: float = 200.0
    canvas: float = 100.0
    d_ref: float | None = None  # defaults to canvas diagonal / 4
    radius_min: float = 3.0
    radius_max: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 50:
            raise ConfigError(f"n_samples must be >= 50, got {self.n_samples}")
        if self.n_distractors < 0:
            raise ConfigError("n_distractors must be >= 0")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.noise == "gamma" and not self.gamma_shape > 0:
            raise ConfigError(f"gamma shape must be > 0, got {self.gamma_shape}")
        if self.sigma < 0 or self.sigma_min <= 0 or self.sigma_range < 0:
            raise ConfigError("noise scales must be non-negative (sigma_min > 0)")
        if not 0 < self.radius_min <= self.radius_max:
            raise ConfigError("need 0 < radius_min <= radius_max")
        if self.d_ref is None:
            self.d_ref = self.canvas * math.sqrt(2.0) / 4.0

    @property
    def n_features(self) -> int:
        return 3 * (self.n_distractors + 1)


@dataclass
class SynthSplit:
    features: np.ndarray     # (n, 3 * (n_distractors + 1))
    y_clean: np.ndarray      # (n, 2)
    y_noisy: np.ndarray      # (n, 2)
    sigma_true: np.ndarray   # (n, 2)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class SynthDataset:
    config: SynthConfig
    train: SynthSplit
    val: SynthSplit
    test: SynthSplit
    manifest: dict = field(default_factory=dict)

    def split(self, name: str) -> SynthSplit:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)


def split_sizes(n: int) -> tuple[int, int, int]:
    """3:1:1 partition sizes."""
    n_train, n_val = (3 * n) // 5, n // 5
    return n_train, n_val, n - n_train - n_val


def sigma_star(features: np.ndarray, config: SynthConfig) -> np.ndarray:
    """True per-component noise scale (n, 2), a deterministic function of the features."""
    features = np.atleast_2d(features)
    n = features.shape[0]
    if config.noise == "homo":
        return np.full((n, 2), float(config.sigma))
    tx, ty, tr = features[:, 0], features[:, 1], features[:, 2]
    if config.n_distractors == 0:
        s = np.full(n, config.sigma_min)
    else:
        d = features[:, 3:].reshape(n, config.n_distractors, 3)
        gap = np.hypot(d[:, :, 0] - tx[:, None], d[:, :, 1] - ty[:, None]) - d[:, :, 2] - tr[:, None]
        nearest = gap.min(axis=1)
        s = config.sigma_min + config.sigma_range * np.clip(1.0 - nearest / config.d_ref, 0.0, 1.0)
    return np.repeat(s[:, None], 2, axis=1)


def standardized_noise(config: SynthConfig, rng: Rng, size) -> np.ndarray:
    """Zero-mean, unit-variance draws of the configured noise shape."""
    if config.noise == "gamma":
        g = config.gamma_shape
        return (sample_gamma(rng, g, 1.0, size) - g) / math.sqrt(g)
    if config.noise == "laplace":
        return sample_laplace(rng, 0.0, 1.0 / math.sqrt(2.0), size)
    return rng.generator.standard_normal(size)


def _geometry(config: SynthConfig, rng: Rng) -> np.ndarray:
    n, k = config.n_samples, config.n_distractors + 1
    g = rng.generator
    margin = config.radius_max
    xy = g.uniform(margin, config.canvas - margin, (n, k, 2))
    r = g.uniform(config.radius_min, config.radius_max, (n, k, 1))
    return np.concatenate([xy, r], axis=2).reshape(n, 3 * k)


def generate(config: SynthConfig) -> SynthDataset:
    root = Rng(config.seed)
    features = _geometry(config, root.child(1))
    y_clean = features[:, :2].copy()
    sig = sigma_star(features, config)
    eps = standardized_noise(config, root.child(2), y_clean.shape)
    y_noisy = y_clean + sig * eps
    return _assemble(config, features, y_clean, y_noisy, sig)


def generate_gamma_variant(config: SynthConfig) -> SynthDataset:
    """Same geometry, Gamma-shaped noise matched to sigma*(x)^2 in variance."""
    if config.noise != "gamma":
        config = SynthConfig(**{**asdict(config), "noise": "gamma"})
    return generate(config)


def _assemble(config, features, y_clean, y_noisy, sig) -> SynthDataset:
    a, b, _ = split_sizes(features.shape[0])
    cuts = [(0, a), (a, a + b), (a + b, features.shape[0])]
    splits = [SynthSplit(features[s:e], y_clean[s:e], y_noisy[s:e], sig[s:e]) for s, e in cuts]
    ds = SynthDataset(config, *splits)
    ds.manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(config),
        "seed": config.seed,
        "checksum": _checksum(_csv_body(ds)),
    }
    return ds


class OracleModel:
    """Predicts the noise-free target centre with the true noise scale."""

    def __init__(self, config: SynthConfig, sigma_factor: float = 1.0):
        self.config = config
        self.sigma_factor = sigma_factor

    def predict(self, features) -> GaussianParams:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return GaussianParams(features[:, :2].copy(), self.sigma_factor * sigma_star(features, self.config))


# -- persistence --------------------------------------------------------------

def _header(n_features: int) -> list[str]:
    return ([f"f{i}" for i in range(n_features)]
            + ["y_clean_x", "y_clean_y", "y_noisy_x", "y_noisy_y", "sigma_x", "sigma_y", "split"])


def _csv_body(ds: SynthDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(ds.config.n_features))
    for name in SPLITS:
        s = ds.split(name)
        for i in range(len(s)):
            row = [repr(float(v)) for v in s.features[i]]
            row += [repr(float(v)) for v in (*s.y_clean[i], *s.y_noisy[i], *s.sigma_true[i])]
            row.append(name)
            w.writerow(row)
    return buf.getvalue()


def _checksum(body: str) -> str:
    return hashlib.sha256(body.encode()).hexdigest()


def save(ds: SynthDataset, path) -> Path:
    """Write ``manifest.json`` and ``samples.csv`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    body = _csv_body(ds)
    manifest = dict(ds.manifest)
    manifest["checksum"] = _checksum(body)
    manifest["n_rows"] = ds.config.n_samples
    (path / "samples.csv").write_text(body)
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def load(path) -> SynthDataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        body = (path / "samples.csv").read_text()
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read dataset at {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"dataset format {manifest.get('format_version')} != {FORMAT_VERSION}")
    if _checksum(body) != manifest.get("checksum"):
        raise DataFormatError(f"checksum mismatch in {path / 'samples.csv'} (truncated or modified)")
    try:
        config = SynthConfig(**manifest["config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise DataFormatError(f"bad config in manifest: {exc}") from exc
    rows = list(csv.reader(io.StringIO(body)))
    if not rows or rows[0] != _header(config.n_features):
        raise DataFormatError("unexpected CSV header")
    rows = rows[1:]
    if len(rows) != manifest.get("n_rows", config.n_samples):
        raise DataFormatError(f"expected {config.n_samples} rows, found {len(rows)}")
    nf = config.n_features
    try:
        num = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"non-numeric field: {exc}") from exc
    if num.shape[1] != nf + 6:
        raise DataFormatError("wrong column count")
    labels = [r[-1] for r in rows]
    splits = []
    for name in SPLITS:
        m = np.array([lab == name for lab in labels])
        block = num[m]
        splits.append(SynthSplit(block[:, :nf], block[:, nf:nf + 2], block[:, nf + 2:nf + 4], block[:, nf + 4:nf + 6]))
    ds = SynthDataset(config, *splits, manifest={k: v for k, v in manifest.items() if k != "n_rows"})
    return ds


def verify_seed(path) -> bool:
    """Regenerate from the manifest's config and seed and compare checksums."""
    ds = load(path)
    regenerated = generate(SynthConfig(**{**asdict(ds.config), "seed": ds.manifest["seed"]}))
    return regenerated.manifest["checksum"] == ds.manifest["checksum"]
