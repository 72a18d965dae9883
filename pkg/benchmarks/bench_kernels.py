"""Compiled kernels against the numpy fallback on the hot paths of the loss estimators.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``; prints one line per kernel.
"""

import argparse
import timeit

import numpy as np

from rcv import _fallback
from rcv.torus import IMAGE_TERMS, TorusKernelSpec, WrappedNormalParams

try:
    from rcv import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def cases(rng):
    spec = TorusKernelSpec(2, 0.5, 2.0)
    args = spec._args()
    x = rng.uniform(-np.pi, np.pi, (64, 2))
    y1 = rng.uniform(-np.pi, np.pi, (21, 256, 2))
    y2 = rng.uniform(-np.pi, np.pi, (21, 256, 2))
    xx = rng.uniform(-np.pi, np.pi, (100_000, 2))
    yy = rng.uniform(-np.pi, np.pi, (100_000, 2))
    d = rng.uniform(-np.pi, np.pi, 100_000)
    wn = (*WrappedNormalParams(0.5).backend_args(), IMAGE_TERMS)
    pts = rng.normal(size=(1000, 2))
    h = np.array([0.2, 0.2])
    q = rng.normal(size=(4096, 2))
    return {
        "wrapped_normal 1e5": lambda k: k.wrapped_normal(d, *wn),
        "torus_kernel 1e5": lambda k: k.torus_kernel(xx, yy, *args),
        "pair_integrand 64x21x256": lambda k: k.torus_pair_integrand(x, y1, y2, 1.0, *args),
        "kde_eval 1000 pts x 4096": lambda k: k.kde_eval(pts, h, q),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:28s} {t_py:11.1f} {'n/a':>12s} {'':>9s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {t_py:11.1f} {t_cy:12.1f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
