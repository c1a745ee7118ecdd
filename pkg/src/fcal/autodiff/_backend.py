"""Kernel backend selection.

The compiled extension is used when it imports; ``FCAL_PURE_PYTHON=1`` in
the environment forces the numpy fallback. Tapes can also be pinned to a
backend explicitly, which is how the tests and the benchmark compare them.
"""

from __future__ import annotations

import os

from . import _pykernels
from . import opcodes as oc

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None


class Backend:
    def __init__(self, name: str, native=None):
        self.name = name
        self._native = native

    def forward(self, op, params, src, values):
        if self._native is not None and op in oc.NATIVE_FORWARD:
            return self._native.forward(op, params, src, values)
        return _pykernels.forward(op, params, src, values)

    def backward(self, g_start, g_stop, g_estart, g_arity, edge_src, edge_partial, adj):
        kern = self._native if self._native is not None else _pykernels
        kern.backward(g_start, g_stop, g_estart, g_arity, edge_src, edge_partial, adj)

    def __repr__(self) -> str:
        return f"Backend({self.name!r})"


PYTHON = Backend("python")
CYTHON = Backend("cython", _native) if _native is not None else None


def available() -> dict[str, Backend]:
    out = {"python": PYTHON}
    if CYTHON is not None:
        out["cython"] = CYTHON
    return out


def get(name: str | None = None) -> Backend:
    if name is None:
        return DEFAULT
    try:
        return available()[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available") from None


_forced = os.environ.get("FCAL_PURE_PYTHON", "").lower() in ("1", "true", "yes")
DEFAULT = PYTHON if (_forced or CYTHON is None) else CYTHON
NAME = DEFAULT.name
