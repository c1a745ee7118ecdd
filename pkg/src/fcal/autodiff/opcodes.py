"""Integer codes for tape primitives, shared by both kernel backends."""

LEAF = 0
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
LINEAR = 12      # a * x + b, params (a, b)
GSIGMOID = 13    # alpha + (beta - alpha) * sigmoid(eta * x), params (alpha, beta, eta)
CLAMP_MIN = 14   # max(x, c), params (c,)
CLIP = 15        # clip(x, lo, hi), params (lo, hi)
SUM = 16
MEAN = 17
AFFINE = 18      # sum_k x_k w_k + b over inputs (x_1..x_m, w_1..w_m, b)
NDTR = 19
NDTRI = 20
LAPLACE_CDF = 21  # standard Laplace CDF of u

NAMES = {
    "leaf": LEAF, "add": ADD, "sub": SUB, "mul": MUL, "div": DIV, "negate": NEG,
    "exp": EXP, "log": LOG, "sqrt": SQRT, "square": SQUARE, "relu": RELU,
    "abs": ABS, "linear": LINEAR, "sigmoid-generalized": GSIGMOID,
    "clamp-min": CLAMP_MIN, "clip": CLIP, "sum": SUM, "mean": MEAN,
    "affine": AFFINE, "ndtr": NDTR, "ndtri": NDTRI, "laplace-cdf": LAPLACE_CDF,
}

# Fixed arity per op; None means variadic (sum, mean, affine).
ARITY = {
    LEAF: 0, ADD: 2, SUB: 2, MUL: 2, DIV: 2, NEG: 1, EXP: 1, LOG: 1, SQRT: 1,
    SQUARE: 1, RELU: 1, ABS: 1, LINEAR: 1, GSIGMOID: 1, CLAMP_MIN: 1, CLIP: 1,
    SUM: None, MEAN: None, AFFINE: None, NDTR: 1, NDTRI: 1, LAPLACE_CDF: 1,
}

DOMAIN_MESSAGES = {
    DIV: "division by zero",
    LOG: "log of a non-positive value",
    SQRT: "sqrt of a non-positive value",
    NDTRI: "inverse normal CDF outside (0, 1)",
}

# Ops the compiled kernel evaluates itself; the rest go through numpy.
NATIVE_FORWARD = frozenset({
    ADD, SUB, MUL, DIV, NEG, EXP, LOG, SQRT, SQUARE, RELU, ABS, LINEAR,
    GSIGMOID, CLAMP_MIN, CLIP, SUM, MEAN, AFFINE, NDTR, LAPLACE_CDF,
})
