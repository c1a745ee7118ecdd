from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ContractError
from .tape import Tape, Vec

TapeBuilder = Callable[[Tape, Vec], Vec]


def evaluate(f: TapeBuilder, point: np.ndarray, backend=None) -> float:
    tape = Tape(backend)
    return float(f(tape, tape.var(np.asarray(point, dtype=float))).value)


def gradient(f: TapeBuilder, point: np.ndarray, backend=None) -> tuple[float, np.ndarray]:
    tape = Tape(backend)
    x = tape.var(np.asarray(point, dtype=float))
    out = f(tape, x)
    return float(out.value), tape.backward(out)[x]


def central_difference(f: TapeBuilder, point: np.ndarray, eps: float = 1e-5, backend=None) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    flat = point.ravel()
    g = np.empty(flat.shape[0])
    for k in range(flat.shape[0]):
        hi = flat.copy()
        lo = flat.copy()
        hi[k] += eps
        lo[k] -= eps
        g[k] = (evaluate(f, hi.reshape(point.shape), backend)
                - evaluate(f, lo.reshape(point.shape), backend)) / (2.0 * eps)
    return g.reshape(point.shape)


def grad_check(f: TapeBuilder, point, eps: float = 1e-5, backend=None) -> float:
    """Largest ``|autodiff - central difference| / max(1, |central difference|)``.

    ``f`` receives a fresh tape and the leaf vector for ``point`` and must
    return a scalar node built from it.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    point = np.asarray(point, dtype=float)
    _, g = gradient(f, point, backend)
    fd = central_difference(f, point, eps, backend)
    g = np.broadcast_to(np.asarray(g, dtype=float), fd.shape)
    if fd.size == 0:
        return 0.0
    return float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd))))
