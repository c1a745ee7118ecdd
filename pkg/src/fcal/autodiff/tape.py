"""Reverse-mode differentiation over a scalar-node tape.

Every node on the tape is one scalar with its own inputs and cached local
partials. Nodes are appended in groups (one op, one arity) so a whole layer
of a batch can be recorded with a single call; a group never reads its own
outputs, which keeps node ids topologically ordered.

``Var`` is a single node, ``Vec`` an array of node ids with numpy-style
indexing and broadcasting. The free functions at the bottom (``exp``,
``log``, ...) accept either tape values or plain floats/arrays, so the loss
formulas are written once and used both for training and for evaluation.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from scipy import special

from ..errors import ContractError, DomainError
from . import _backend
from . import opcodes as oc


class Tape:
    """Append-only record of scalar operations."""

    def __init__(self, backend: str | _backend.Backend | None = None, capacity: int = 1 << 12):
        self.backend = backend if isinstance(backend, _backend.Backend) else _backend.get(backend)
        self._values = np.empty(capacity, dtype=np.float64)
        self._n = 0
        self._edge_src = np.empty(capacity, dtype=np.int64)
        self._edge_partial = np.empty(capacity, dtype=np.float64)
        self._ne = 0
        # (op, start, stop, edge_start, arity, params, src) per group
        self._groups: list[tuple] = []

    def __len__(self) -> int:
        return self._n

    @property
    def values(self) -> np.ndarray:
        return self._values[:self._n]

    @property
    def n_edges(self) -> int:
        return self._ne

    def _reserve(self, nodes: int, edges: int) -> None:
        if self._n + nodes > self._values.shape[0]:
            cap = max(2 * self._values.shape[0], self._n + nodes)
            new = np.empty(cap, dtype=np.float64)
            new[:self._n] = self._values[:self._n]
            self._values = new
        if self._ne + edges > self._edge_src.shape[0]:
            cap = max(2 * self._edge_src.shape[0], self._ne + edges)
            src = np.empty(cap, dtype=np.int64)
            src[:self._ne] = self._edge_src[:self._ne]
            part = np.empty(cap, dtype=np.float64)
            part[:self._ne] = self._edge_partial[:self._ne]
            self._edge_src, self._edge_partial = src, part

    # -- leaves -------------------------------------------------------------

    def var(self, value) -> "Vec":
        """Leaf node(s) holding ``value`` (scalar -> Var, array -> Vec)."""
        arr = np.asarray(value, dtype=np.float64)
        flat = arr.ravel()
        n = flat.shape[0]
        self._reserve(n, 0)
        start = self._n
        self._values[start:start + n] = flat
        self._n += n
        self._groups.append((oc.LEAF, start, start + n, self._ne, 0, None, None))
        ids = np.arange(start, start + n, dtype=np.int64).reshape(arr.shape)
        return _wrap(self, ids)

    const = var

    # -- recording ----------------------------------------------------------

    def _push(self, op: int, src: np.ndarray, params=()) -> np.ndarray:
        src = np.ascontiguousarray(src, dtype=np.int64)
        n, arity = src.shape
        start = self._n
        if n == 0:
            return np.empty(0, dtype=np.int64)
        if src.size and (src.max() >= start or src.min() < 0):
            raise ContractError("inputs must be existing nodes of this tape")
        p = np.asarray(params, dtype=np.float64)
        out, part, bad = self.backend.forward(op, p, src, self._values[:start])
        if bad >= 0:
            vals = self._values[src[bad]]
            raise DomainError(f"{oc.DOMAIN_MESSAGES.get(op, 'domain violation')} (inputs {vals.tolist()})")
        self._reserve(n, n * arity)
        self._values[start:start + n] = out
        e0 = self._ne
        self._edge_src[e0:e0 + n * arity] = src.ravel()
        self._edge_partial[e0:e0 + n * arity] = part.ravel()
        self._ne += n * arity
        self._n += n
        self._groups.append((op, start, start + n, e0, arity, p, src))
        return np.arange(start, start + n, dtype=np.int64)

    def record(self, op: str | int, *inputs, **params) -> "Vec":
        """Record ``op`` applied elementwise to ``inputs``.

        Fixed-arity ops broadcast their inputs against each other; ``sum``
        and ``mean`` reduce their single input to one node. Scalar op
        parameters are passed by keyword (``alpha``, ``beta``, ``eta`` for
        the generalized sigmoid; ``a``, ``b`` for ``linear``; ``c`` for
        ``clamp-min``; ``lo``, ``hi`` for ``clip``).
        """
        code = oc.NAMES[op] if isinstance(op, str) else int(op)
        vecs = [_as_vec(self, x) for x in inputs]
        arity = oc.ARITY[code]
        if code in (oc.SUM, oc.MEAN):
            if len(vecs) != 1:
                raise ContractError("sum/mean take a single input")
            return vecs[0].sum() if code == oc.SUM else vecs[0].mean()
        if code == oc.AFFINE:
            raise ContractError("use affine() for affine nodes")
        if arity != len(vecs):
            raise ContractError(f"op {op!r} takes {arity} inputs, got {len(vecs)}")
        return _elementwise(self, code, vecs, _op_params(code, params))

    # -- differentiation ----------------------------------------------------

    def _group_arrays(self):
        g = np.array([(s, e, es, a) for (_, s, e, es, a, _, _) in self._groups], dtype=np.int64)
        if g.size == 0:
            g = np.zeros((0, 4), dtype=np.int64)
        return tuple(np.ascontiguousarray(g[:, i]) for i in range(4))

    def backward(self, output: "Vec") -> "Gradients":
        """Adjoints of every node with respect to the scalar ``output``."""
        if not isinstance(output, Vec) or output.tape is not self:
            raise ContractError("output must be a node of this tape")
        if output.ids.size != 1:
            raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
        adj = np.zeros(self._n, dtype=np.float64)
        adj[int(output.ids.reshape(()))] = 1.0
        g_start, g_stop, g_estart, g_arity = self._group_arrays()
        self.backend.backward(g_start, g_stop, g_estart, g_arity,
                              self._edge_src[:self._ne], self._edge_partial[:self._ne], adj)
        return Gradients(adj)

    def replay(self) -> np.ndarray:
        """Recompute every node value from the leaves; matches ``values`` bit-exactly."""
        vals = np.empty(self._n, dtype=np.float64)
        for op, start, stop, _, _, params, src in self._groups:
            if op == oc.LEAF:
                vals[start:stop] = self._values[start:stop]
            else:
                out, _, bad = self.backend.forward(op, params, src, vals[:start])
                if bad >= 0:
                    raise DomainError("replay hit a domain violation")
                vals[start:stop] = out
        return vals


class Gradients(Mapping):
    """Map from node id to d(output)/d(node).

    Indexing with a ``Var``/``Vec`` returns the matching float/array.
    """

    def __init__(self, adjoint: np.ndarray):
        self.adjoint = adjoint

    def __getitem__(self, key):
        if isinstance(key, Vec):
            g = self.adjoint[key.ids]
            return float(g) if g.ndim == 0 else g
        return float(self.adjoint[key])

    def __iter__(self):
        return iter(range(self.adjoint.shape[0]))

    def __len__(self) -> int:
        return self.adjoint.shape[0]


def _op_params(code: int, params: dict) -> tuple:
    if code == oc.GSIGMOID:
        return (params["alpha"], params["beta"], params["eta"])
    if code == oc.LINEAR:
        return (params.get("a", 1.0), params.get("b", 0.0))
    if code == oc.CLAMP_MIN:
        return (params["c"],)
    if code == oc.CLIP:
        return (params["lo"], params["hi"])
    return ()


def _wrap(tape: Tape, ids: np.ndarray) -> "Vec":
    if ids.ndim == 0:
        return Var(tape, ids)
    return Vec(tape, ids)


def _as_vec(tape: Tape, x) -> "Vec":
    if isinstance(x, Vec):
        if x.tape is not tape:
            raise ContractError("inputs belong to different tapes")
        return x
    return tape.const(x)


def _elementwise(tape: Tape, code: int, vecs: list, params=()) -> "Vec":
    ids = np.broadcast_arrays(*[v.ids for v in vecs])
    shape = ids[0].shape
    src = np.stack([i.ravel() for i in ids], axis=1)
    out = tape._push(code, src, params)
    return _wrap(tape, out.reshape(shape))


class Vec:
    """Array of tape nodes. Arithmetic records new nodes on the same tape."""

    __slots__ = ("tape", "ids")
    __array_ufunc__ = None  # make ndarray (op) Vec defer to Vec's reflected ops

    def __init__(self, tape: Tape, ids: np.ndarray):
        self.tape = tape
        self.ids = np.asarray(ids, dtype=np.int64)

    @property
    def shape(self):
        return self.ids.shape

    @property
    def ndim(self):
        return self.ids.ndim

    @property
    def size(self):
        return self.ids.size

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def value(self):
        v = self.tape.values[self.ids]
        return float(v) if v.ndim == 0 else v

    values = value

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, value={self.value!r})"

    # -- structure ----------------------------------------------------------

    def __getitem__(self, key) -> "Vec":
        if isinstance(key, Vec):
            raise TypeError("cannot index with tape values")
        return _wrap(self.tape, self.ids[key])

    def reshape(self, *shape) -> "Vec":
        return _wrap(self.tape, self.ids.reshape(*shape))

    def ravel(self) -> "Vec":
        return _wrap(self.tape, self.ids.ravel())

    @property
    def T(self) -> "Vec":
        return _wrap(self.tape, self.ids.T)

    # -- arithmetic ---------------------------------------------------------

    def _linear(self, a: float, b: float) -> "Vec":
        return _elementwise(self.tape, oc.LINEAR, [self], (a, b))

    def _binary(self, code: int, other, reflected=False) -> "Vec":
        other = _as_vec(self.tape, other)
        pair = [other, self] if reflected else [self, other]
        return _elementwise(self.tape, code, pair)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return self._linear(1.0, float(other))
        return self._binary(oc.ADD, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self._linear(1.0, -float(other))
        return self._binary(oc.SUB, other)

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return self._linear(-1.0, float(other))
        return self._binary(oc.SUB, other, reflected=True)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self._linear(float(other), 0.0)
        return self._binary(oc.MUL, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            if other == 0:
                raise DomainError("division by zero")
            return self._binary(oc.DIV, float(other))
        return self._binary(oc.DIV, other)

    def __rtruediv__(self, other):
        return self._binary(oc.DIV, other, reflected=True)

    def __neg__(self):
        return _elementwise(self.tape, oc.NEG, [self])

    def __pow__(self, k):
        if k == 2:
            return _elementwise(self.tape, oc.SQUARE, [self])
        if k == 0.5:
            return _elementwise(self.tape, oc.SQRT, [self])
        if k == 1:
            return self
        raise ContractError("only powers 1, 2 and 0.5 are recorded")

    # -- reductions ---------------------------------------------------------

    def _reduce(self, code: int, axis) -> "Vec":
        if axis is None:
            src = self.ids.reshape(1, -1)
            out = self.tape._push(code, src)
            return _wrap(self.tape, out.reshape(()))
        ids = np.moveaxis(self.ids, axis, -1)
        shape = ids.shape[:-1]
        out = self.tape._push(code, ids.reshape(-1, ids.shape[-1]))
        return _wrap(self.tape, out.reshape(shape))

    def sum(self, axis=None) -> "Vec":
        return self._reduce(oc.SUM, axis)

    def mean(self, axis=None) -> "Vec":
        return self._reduce(oc.MEAN, axis)


class Var(Vec):
    """A single scalar node."""

    __slots__ = ()

    @property
    def id(self) -> int:
        return int(self.ids)

    def __float__(self) -> float:
        return float(self.value)


# -- functions usable on tape values and plain numbers alike -----------------

def _unary(code: int, x, params=()):
    return _elementwise(x.tape, code, [x], params)


def _np_domain(ok, message):
    if not np.all(ok):
        raise DomainError(message)


def exp(x):
    return _unary(oc.EXP, x) if isinstance(x, Vec) else np.exp(x)


def log(x):
    if isinstance(x, Vec):
        return _unary(oc.LOG, x)
    _np_domain(np.asarray(x) > 0, oc.DOMAIN_MESSAGES[oc.LOG])
    return np.log(x)


def sqrt(x):
    if isinstance(x, Vec):
        return _unary(oc.SQRT, x)
    _np_domain(np.asarray(x) >= 0, oc.DOMAIN_MESSAGES[oc.SQRT])
    return np.sqrt(x)


def square(x):
    return _unary(oc.SQUARE, x) if isinstance(x, Vec) else np.square(x)


def relu(x):
    return _unary(oc.RELU, x) if isinstance(x, Vec) else np.maximum(x, 0.0)


def absolute(x):
    return _unary(oc.ABS, x) if isinstance(x, Vec) else np.abs(x)


def gsigmoid(x, alpha: float, beta: float, eta: float):
    """alpha + (beta - alpha) / (1 + exp(-eta * x))."""
    if isinstance(x, Vec):
        return _unary(oc.GSIGMOID, x, (alpha, beta, eta))
    return alpha + (beta - alpha) * special.expit(eta * np.asarray(x, dtype=float))


def clamp_min(x, c: float):
    return _unary(oc.CLAMP_MIN, x, (c,)) if isinstance(x, Vec) else np.maximum(x, c)


def clip(x, lo: float, hi: float):
    return _unary(oc.CLIP, x, (lo, hi)) if isinstance(x, Vec) else np.clip(x, lo, hi)


def ndtr(x):
    return _unary(oc.NDTR, x) if isinstance(x, Vec) else special.ndtr(x)


def ndtri(p):
    if isinstance(p, Vec):
        return _unary(oc.NDTRI, p)
    from ..distmath import std_normal_inv_cdf
    return std_normal_inv_cdf(p)


def laplace_cdf_std(u):
    if isinstance(u, Vec):
        return _unary(oc.LAPLACE_CDF, u)
    u = np.asarray(u, dtype=float)
    e = np.exp(-np.abs(u))
    return np.where(u < 0.0, 0.5 * e, 1.0 - 0.5 * e)


def total(x, axis=None):
    return x.sum(axis=axis) if isinstance(x, Vec) else np.sum(x, axis=axis)


def mean(x, axis=None):
    return x.mean(axis=axis) if isinstance(x, Vec) else np.mean(x, axis=axis)


def affine(x, w, b):
    """``x @ w + b`` with one fused node per output element.

    ``x`` is (B, m) or (m,), ``w`` is (m, n), ``b`` is (n,). Works on tape
    values (any of the three may be constants) and on plain arrays.
    """
    if not any(isinstance(t, Vec) for t in (x, w, b)):
        return np.asarray(x) @ np.asarray(w) + np.asarray(b)
    tape = next(t.tape for t in (x, w, b) if isinstance(t, Vec))
    x, w, b = (_as_vec(tape, t) for t in (x, w, b))
    squeeze = x.ndim == 1
    xi = x.ids.reshape(1, -1) if squeeze else x.ids
    bsz, m = xi.shape
    if w.shape[0] != m or b.shape != (w.shape[1],):
        raise ContractError(f"affine shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    n = w.shape[1]
    src = np.empty((bsz, n, 2 * m + 1), dtype=np.int64)
    src[:, :, :m] = xi[:, None, :]
    src[:, :, m:2 * m] = w.ids.T[None, :, :]
    src[:, :, 2 * m] = b.ids[None, :]
    out = tape._push(oc.AFFINE, src.reshape(bsz * n, 2 * m + 1)).reshape(bsz, n)
    return _wrap(tape, out[0] if squeeze else out)
