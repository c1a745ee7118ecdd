"""Compare the compiled and numpy kernel backends on a training-sized workload.

Each repetition records one mini-batch objective (MLP forward pass, NLL and
f-Cal KL terms) on a fresh tape and runs the reverse sweep. The gradients of
the two backends are compared before timing.

    python3 benchmarks/bench_kernels.py [--batch 512] [--reps 10]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fcal import autodiff as ad
from fcal import model as M
from fcal.autodiff import _backend
from fcal.distmath import Rng
from fcal.losses import LossSpec, objective


def make_problem(batch: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, 17))
    y = rng.normal(size=(batch, 2)) * 3
    model = M.init_for_data(seed, x, y)
    return model, x, y


def one_step(backend, model, x, y, spec):
    tape = ad.Tape(backend)
    p = tape.var(model.params)
    pred = M.forward(model, x, tape, p)
    total, _ = objective(pred, y, spec, Rng(7))
    return tape.backward(total)[p]


def bench(backend, model, x, y, spec, reps: int) -> tuple[float, float]:
    one_step(backend, model, x, y, spec)  # warm-up
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        one_step(backend, model, x, y, spec)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), float(np.min(times))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--reps", type=int, default=10)
    args = ap.parse_args(argv)

    model, x, y = make_problem(args.batch)
    spec = LossSpec(lam=0.2, K=64, H=64, divergence="kl")
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    grads = {name: one_step(b, model, x, y, spec) for name, b in backends.items()}
    if len(grads) == 2:
        diff = np.max(np.abs(grads["python"] - grads["cython"]))
        print(f"max |grad difference| between backends: {diff:.3e}")

    print(f"batch={args.batch} params={model.n_params} reps={args.reps}")
    results = {}
    for name, b in backends.items():
        med, best = bench(b, model, x, y, spec, args.reps)
        results[name] = med
        print(f"{name:>8}: median {1e3 * med:8.2f} ms   best {1e3 * best:8.2f} ms")
    if len(results) == 2:
        print(f"speed-up (python / cython): {results['python'] / results['cython']:.2f}x")


if __name__ == "__main__":
    main()
