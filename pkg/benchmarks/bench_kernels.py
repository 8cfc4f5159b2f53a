"""Compare the compiled and numpy im2col/col2im kernels on the shapes used in training.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from genet.diffcore import kernels

# (name, input shape, kernel, stride, pad)
CASES = [
    ("extractor conv1", (32, 3, 64, 64), 3, 2, 1),
    ("extractor conv2", (32, 16, 32, 32), 3, 1, 1),
    ("extractor conv4", (32, 64, 32, 32), 3, 1, 1),
    ("generator deconv5", (64, 3, 64, 64), 4, 2, 1),
    ("generator deconv4", (64, 16, 32, 32), 4, 2, 1),
]


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'case':20s} {'op':7s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, shape, k, stride, pad in CASES:
        x = rng.standard_normal(shape).astype(args.dtype)
        cols = kernels._BACKENDS["numpy"].im2col(x, k, stride, pad)
        for op in ("im2col", "col2im"):
            row = {}
            for b in backends:
                impl = kernels._BACKENDS[b]
                if op == "im2col":
                    row[b] = best_of(lambda: impl.im2col(x, k, stride, pad), args.repeat)
                else:
                    row[b] = best_of(lambda: impl.col2im(cols, shape, k, stride, pad), args.repeat)
            speed = f"{row['numpy'] / row['cython']:8.2f}x" if "cython" in row else "       -"
            print(f"{name:20s} {op:7s} " + " ".join(f"{row[b] * 1e3:8.2f}ms" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
