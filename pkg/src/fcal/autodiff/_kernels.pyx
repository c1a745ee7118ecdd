# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape kernels.

Same contracts as ``_pykernels.forward`` / ``_pykernels.backward``; the node
loop runs in C instead of through numpy temporaries.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, erfc

cnp.import_array()

cdef enum:
    ADD = 1
    SUB = 2
    MUL = 3
    DIV = 4
    NEG = 5
    EXP = 6
    LOG = 7
    SQRT = 8
    SQUARE = 9
    RELU = 10
    ABS = 11
    LINEAR = 12
    GSIGMOID = 13
    CLAMP_MIN = 14
    CLIP = 15
    SUM = 16
    MEAN = 17
    AFFINE = 18
    NDTR = 19
    LAPLACE_CDF = 21

cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476


cdef inline double _expit(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def forward(int op, const double[::1] params, const cnp.int64_t[:, ::1] src,
            const double[::1] values):
    cdef Py_ssize_t n = src.shape[0]
    cdef Py_ssize_t k = src.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    part_arr = np.empty((n, k), dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[:, ::1] part = part_arr
    cdef Py_ssize_t i, j, m
    cdef double x, y, s, acc, e
    cdef double p0 = params[0] if params.shape[0] > 0 else 0.0
    cdef double p1 = params[1] if params.shape[0] > 1 else 0.0
    cdef double p2 = params[2] if params.shape[0] > 2 else 0.0
    cdef Py_ssize_t bad = -1

    with nogil:
        if op == ADD:
            for i in range(n):
                out[i] = values[src[i, 0]] + values[src[i, 1]]
                part[i, 0] = 1.0
                part[i, 1] = 1.0
        elif op == SUB:
            for i in range(n):
                out[i] = values[src[i, 0]] - values[src[i, 1]]
                part[i, 0] = 1.0
                part[i, 1] = -1.0
        elif op == MUL:
            for i in range(n):
                x = values[src[i, 0]]
                y = values[src[i, 1]]
                out[i] = x * y
                part[i, 0] = y
                part[i, 1] = x
        elif op == DIV:
            for i in range(n):
                x = values[src[i, 0]]
                y = values[src[i, 1]]
                if y == 0.0:
                    bad = i
                    break
                out[i] = x / y
                part[i, 0] = 1.0 / y
                part[i, 1] = -out[i] / y
        elif op == NEG:
            for i in range(n):
                out[i] = -values[src[i, 0]]
                part[i, 0] = -1.0
        elif op == EXP:
            for i in range(n):
                out[i] = exp(values[src[i, 0]])
                part[i, 0] = out[i]
        elif op == LOG:
            for i in range(n):
                x = values[src[i, 0]]
                if not x > 0.0:
                    bad = i
                    break
                out[i] = log(x)
                part[i, 0] = 1.0 / x
        elif op == SQRT:
            for i in range(n):
                x = values[src[i, 0]]
                if not x > 0.0:
                    bad = i
                    break
                out[i] = sqrt(x)
                part[i, 0] = 0.5 / out[i]
        elif op == SQUARE:
            for i in range(n):
                x = values[src[i, 0]]
                out[i] = x * x
                part[i, 0] = 2.0 * x
        elif op == RELU:
            for i in range(n):
                x = values[src[i, 0]]
                if x > 0.0:
                    out[i] = x
                    part[i, 0] = 1.0
                else:
                    out[i] = 0.0
                    part[i, 0] = 0.0
        elif op == ABS:
            for i in range(n):
                x = values[src[i, 0]]
                out[i] = fabs(x)
                part[i, 0] = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
        elif op == LINEAR:
            for i in range(n):
                out[i] = p0 * values[src[i, 0]] + p1
                part[i, 0] = p0
        elif op == GSIGMOID:
            for i in range(n):
                s = _expit(p2 * values[src[i, 0]])
                out[i] = p0 + (p1 - p0) * s
                part[i, 0] = p2 * (p1 - p0) * s * (1.0 - s)
        elif op == CLAMP_MIN:
            for i in range(n):
                x = values[src[i, 0]]
                if x > p0:
                    out[i] = x
                    part[i, 0] = 1.0
                else:
                    out[i] = p0
                    part[i, 0] = 0.0
        elif op == CLIP:
            for i in range(n):
                x = values[src[i, 0]]
                if x <= p0:
                    out[i] = p0
                    part[i, 0] = 0.0
                elif x >= p1:
                    out[i] = p1
                    part[i, 0] = 0.0
                else:
                    out[i] = x
                    part[i, 0] = 1.0
        elif op == SUM or op == MEAN:
            s = 1.0 if op == SUM else 1.0 / k
            for i in range(n):
                acc = 0.0
                for j in range(k):
                    acc = acc + values[src[i, j]]
                    part[i, j] = s
                out[i] = acc * s if op == MEAN else acc
        elif op == AFFINE:
            m = (k - 1) // 2
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    x = values[src[i, j]]
                    y = values[src[i, m + j]]
                    acc = acc + x * y
                    part[i, j] = y
                    part[i, m + j] = x
                out[i] = acc + values[src[i, 2 * m]]
                part[i, 2 * m] = 1.0
        elif op == NDTR:
            for i in range(n):
                x = values[src[i, 0]]
                out[i] = 0.5 * erfc(-x * INV_SQRT2)
                part[i, 0] = exp(-0.5 * x * x) * INV_SQRT_2PI
        elif op == LAPLACE_CDF:
            for i in range(n):
                x = values[src[i, 0]]
                e = exp(-fabs(x))
                out[i] = 0.5 * e if x < 0.0 else 1.0 - 0.5 * e
                part[i, 0] = 0.5 * e
        else:
            bad = -2
    if bad == -2:
        raise ValueError(f"op code {op} not handled by the compiled kernel")
    if bad >= 0:
        return None, None, bad
    return out_arr, part_arr, -1


def backward(const cnp.int64_t[::1] g_start, const cnp.int64_t[::1] g_stop,
             const cnp.int64_t[::1] g_estart, const cnp.int64_t[::1] g_arity,
             const cnp.int64_t[::1] edge_src, const double[::1] edge_partial,
             double[::1] adj):
    cdef Py_ssize_t gi, i, j, e, arity
    cdef double a
    with nogil:
        for gi in range(g_start.shape[0] - 1, -1, -1):
            arity = g_arity[gi]
            if arity == 0:
                continue
            for i in range(g_stop[gi] - 1, g_start[gi] - 1, -1):
                a = adj[i]
                if a == 0.0:
                    continue
                e = g_estart[gi] + (i - g_start[gi]) * arity
                for j in range(arity):
                    adj[edge_src[e + j]] += a * edge_partial[e + j]
