from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


def shape_of(x) -> tuple:
    return tuple(x.shape) if hasattr(x, "shape") else np.shape(x)


def values_of(x) -> np.ndarray:
    """Numeric values of a plain array or a tape ``Vec``."""
    return np.asarray(x.value if hasattr(x, "tape") else x, dtype=float)


@dataclass
class GaussianParams:
    """Per-component predictive mean and standard deviation.

    ``mu`` and ``sigma`` share a shape, typically (batch, output_dim). They are
    plain arrays at evaluation time and tape ``Vec`` values during training.
    """

    mu: Any
    sigma: Any

    def __post_init__(self) -> None:
        if shape_of(self.mu) != shape_of(self.sigma):
            raise ValueError(f"mu {shape_of(self.mu)} and sigma {shape_of(self.sigma)} differ in shape")
