"""Pure numpy tape kernels.

Every group on the tape holds ``n`` nodes of one op with a common arity, so
forward evaluation of a group is a single vectorized expression and backward
accumulation of a group is a single ``bincount`` scatter. Nodes inside a group
never feed each other, which is what makes the per-group vectorization exact.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..distmath import std_normal_inv_cdf
from . import opcodes as oc

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _expit(x):
    return special.expit(x)


def forward(op: int, params: np.ndarray, src: np.ndarray, values: np.ndarray):
    """Values and local partials for one group.

    Returns ``(out, partials, bad)`` where ``partials`` has the shape of
    ``src`` and ``bad`` is the row index of the first domain violation or -1.
    """
    v = values[src]
    n = src.shape[0]
    bad = -1
    if op == oc.ADD:
        out = v[:, 0] + v[:, 1]
        part = np.ones_like(v)
    elif op == oc.SUB:
        out = v[:, 0] - v[:, 1]
        part = np.empty_like(v)
        part[:, 0] = 1.0
        part[:, 1] = -1.0
    elif op == oc.MUL:
        out = v[:, 0] * v[:, 1]
        part = v[:, ::-1].copy()
    elif op == oc.DIV:
        den = v[:, 1]
        zero = den == 0.0
        if zero.any():
            return None, None, int(np.argmax(zero))
        out = v[:, 0] / den
        part = np.empty_like(v)
        part[:, 0] = 1.0 / den
        part[:, 1] = -out / den
    elif op == oc.NEG:
        out = -v[:, 0]
        part = np.full_like(v, -1.0)
    elif op == oc.EXP:
        out = np.exp(v[:, 0])
        part = out[:, None].copy()
    elif op == oc.LOG:
        x = v[:, 0]
        nonpos = ~(x > 0.0)
        if nonpos.any():
            return None, None, int(np.argmax(nonpos))
        out = np.log(x)
        part = (1.0 / x)[:, None]
    elif op == oc.SQRT:
        x = v[:, 0]
        nonpos = ~(x > 0.0)
        if nonpos.any():
            return None, None, int(np.argmax(nonpos))
        out = np.sqrt(x)
        part = (0.5 / out)[:, None]
    elif op == oc.SQUARE:
        x = v[:, 0]
        out = x * x
        part = (2.0 * x)[:, None]
    elif op == oc.RELU:
        x = v[:, 0]
        pos = x > 0.0
        out = np.where(pos, x, 0.0)
        part = pos.astype(float)[:, None]
    elif op == oc.ABS:
        x = v[:, 0]
        out = np.abs(x)
        part = np.sign(x)[:, None]
    elif op == oc.LINEAR:
        out = params[0] * v[:, 0] + params[1]
        part = np.full_like(v, params[0])
    elif op == oc.GSIGMOID:
        lo, hi, eta = params[0], params[1], params[2]
        s = _expit(eta * v[:, 0])
        out = lo + (hi - lo) * s
        part = (eta * (hi - lo) * s * (1.0 - s))[:, None]
    elif op == oc.CLAMP_MIN:
        x = v[:, 0]
        keep = x > params[0]
        out = np.where(keep, x, params[0])
        part = keep.astype(float)[:, None]
    elif op == oc.CLIP:
        x = v[:, 0]
        inside = (x > params[0]) & (x < params[1])
        out = np.clip(x, params[0], params[1])
        part = inside.astype(float)[:, None]
    elif op == oc.SUM:
        out = v.sum(axis=1)
        part = np.ones_like(v)
    elif op == oc.MEAN:
        k = v.shape[1]
        out = v.sum(axis=1) / k
        part = np.full_like(v, 1.0 / k)
    elif op == oc.AFFINE:
        m = (v.shape[1] - 1) // 2
        x = v[:, :m]
        w = v[:, m:2 * m]
        out = (x * w).sum(axis=1) + v[:, 2 * m]
        part = np.empty_like(v)
        part[:, :m] = w
        part[:, m:2 * m] = x
        part[:, 2 * m] = 1.0
    elif op == oc.NDTR:
        x = v[:, 0]
        out = special.ndtr(x)
        part = (np.exp(-0.5 * x * x) * _INV_SQRT_2PI)[:, None]
    elif op == oc.NDTRI:
        p = v[:, 0]
        outside = ~((p > 0.0) & (p < 1.0))
        if outside.any():
            return None, None, int(np.argmax(outside))
        out = std_normal_inv_cdf(p)
        part = (1.0 / (np.exp(-0.5 * out * out) * _INV_SQRT_2PI))[:, None]
    elif op == oc.LAPLACE_CDF:
        u = v[:, 0]
        e = np.exp(-np.abs(u))
        out = np.where(u < 0.0, 0.5 * e, 1.0 - 0.5 * e)
        part = (0.5 * e)[:, None]
    else:
        raise ValueError(f"unknown op code {op}")
    if part.shape != src.shape:
        part = np.broadcast_to(part, src.shape)
    return np.ascontiguousarray(out, dtype=float).reshape(n), np.ascontiguousarray(part, dtype=float), bad


def backward(g_start, g_stop, g_estart, g_arity, edge_src, edge_partial, adj):
    """Reverse sweep over groups, accumulating adjoints in place."""
    for gi in range(len(g_start) - 1, -1, -1):
        arity = int(g_arity[gi])
        if arity == 0:
            continue
        start, stop = int(g_start[gi]), int(g_stop[gi])
        a = adj[start:stop]
        if not a.any():
            continue
        e0 = int(g_estart[gi])
        e1 = e0 + (stop - start) * arity
        src = edge_src[e0:e1]
        w = edge_partial[e0:e1].reshape(stop - start, arity) * a[:, None]
        adj[:start] += np.bincount(src, weights=w.ravel(), minlength=start)[:start]
