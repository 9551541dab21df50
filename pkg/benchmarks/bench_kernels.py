"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times the two hot paths of an experiment: batched MVKD scoring of comparison
pairs and batched Procrustes rotation onto a reference, and checks that both
backends return the same numbers.
"""
import argparse
import time

import numpy as np

from shapelr import _pykernels

try:
    from shapelr import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _spd(rng, p):
    A = rng.normal(size=(p, p))
    return A @ A.T + 0.5 * np.eye(p)


def mvkd_case(rng, n_pairs, p, m):
    U, H = _spd(rng, p), _spd(rng, p)
    means = rng.normal(0, 2, size=(m, p))
    YA, YB = rng.normal(0, 2, size=(2, n_pairs, p))
    NA = np.full(n_pairs, 10.0)
    NB = np.full(n_pairs, 10.0)
    return YA, NA, YB, NB, U, H, means


def rotation_case(rng, n, k):
    ref = rng.normal(size=(k, 2))
    ref -= ref.mean(axis=0)
    X = rng.normal(size=(n, k, 2))
    X -= X.mean(axis=1, keepdims=True)
    return X, ref


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    cases = []
    for n_pairs, p, m in ((1600, 1, 38), (1600, 3, 38), (20000, 3, 38), (1600, 6, 100)):
        data = mvkd_case(rng, n_pairs, p, m)
        cases.append((f"mvkd  pairs={n_pairs:<6d} p={p} m={m:<4d}", "mvkd_log10_lr_batch", data))
    for n, k in ((800, 11), (20000, 11), (2000, 40)):
        data = rotation_case(rng, n, k)
        cases.append((f"rotate configs={n:<6d} k={k:<3d}      ", "rotate_to_reference", data))

    print(f"{'case':<38} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}  max |diff|")
    for label, name, data in cases:
        t_py, out_py = _best_of(lambda: getattr(_pykernels, name)(*data), args.repeat)
        if _ckernels is None:
            print(f"{label:<38} {1e3 * t_py:12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c, out_c = _best_of(lambda: getattr(_ckernels, name)(*data), args.repeat)
        a = out_py[0] if isinstance(out_py, tuple) else out_py
        b = out_c[0] if isinstance(out_c, tuple) else out_c
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{label:<38} {1e3 * t_py:12.2f} {1e3 * t_c:12.2f} {t_py / t_c:7.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
