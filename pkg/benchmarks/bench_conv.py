"""Benchmark the compiled convolution kernels against the numpy fallback.

Run with: python3 benchmarks/bench_conv.py
"""

import time

import numpy as np

from polarsfp.tinynet import _kernels_np as np_backend

try:
    from polarsfp.tinynet import _convkernels as cy_backend
except ImportError:
    cy_backend = None

SHAPES = [
    # (batch, c_in, height, width, filters) roughly matching training loads
    (8, 4, 64, 64, 8),
    (32, 8, 64, 64, 8),
    (8, 16, 32, 32, 16),
    (2, 32, 16, 16, 32),
]
REPEATS = 5


def _time(fn, *args):
    best = float("inf")
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_backend(backend, n, c, h, w, f):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(n, c, h, w)))
    wt = np.ascontiguousarray(rng.normal(size=(f, c, 3, 3)))
    y = np.ascontiguousarray(rng.normal(size=(n, f, h, w)))
    fwd = _time(backend.conv2d_forward, x, wt, 1, 1)
    gin = _time(backend.conv2d_grad_input, y, wt, x.shape, 1, 1)
    gwt = _time(backend.conv2d_grad_weights, y, x, wt.shape, 1, 1)
    return fwd, gin, gwt


def main():
    backends = [("numpy", np_backend)]
    if cy_backend is not None:
        backends.append(("cython", cy_backend))
    else:
        print("compiled backend unavailable; benchmarking numpy only")

    header = f"{'shape (N,C,H,W,F)':<22}{'backend':<9}{'forward':>10}{'grad_in':>10}{'grad_w':>10}"
    print(header)
    print("-" * len(header))
    for shape in SHAPES:
        for name, backend in backends:
            fwd, gin, gwt = bench_backend(backend, *shape)
            print(f"{str(shape):<22}{name:<9}{fwd:>9.4f}s{gin:>9.4f}s{gwt:>9.4f}s")


if __name__ == "__main__":
    main()
