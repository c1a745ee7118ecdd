"""Scalar-tape reverse-mode differentiation with a compiled kernel core.

The forward/backward sweeps run in a Cython extension when it is built and
fall back to vectorized numpy otherwise; ``BACKEND`` names the one in use.
"""

from ._backend import NAME as BACKEND
from ._backend import available as available_backends
from .gradcheck import central_difference, grad_check, gradient
from .tape import (
    Gradients,
    Tape,
    Var,
    Vec,
    absolute,
    affine,
    clamp_min,
    clip,
    exp,
    gsigmoid,
    laplace_cdf_std,
    log,
    mean,
    ndtr,
    ndtri,
    relu,
    sqrt,
    square,
    total,
)

__all__ = [
    "BACKEND", "Gradients", "Tape", "Var", "Vec", "absolute", "affine",
    "available_backends", "central_difference", "clamp_min", "clip", "exp",
    "grad_check", "gradient", "gsigmoid", "laplace_cdf_std", "log", "mean",
    "ndtr", "ndtri", "relu", "sqrt", "square", "total",
]
