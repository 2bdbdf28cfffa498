"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--size 256]

Both backends are imported directly, so the dispatch environment variable
does not matter here. Outputs are checked for equality before timing.
"""
import argparse
import timeit

import numpy as np

from pihot import _pykernels

try:
    from pihot import _ckernels
except ImportError:
    _ckernels = None


def cases(size: int, rng: np.random.Generator):
    mask = (rng.random((size, size)) < 0.05).astype(np.uint8)
    labels_gt = rng.integers(0, 18, size * size).astype(np.int64)
    labels_pred = rng.integers(0, 18, size * size).astype(np.int64)
    image = rng.random((size // 2, size // 2, 3))
    hole = np.zeros((size // 2, size // 2), np.uint8)
    hole[size // 8: 3 * size // 8, size // 8: 3 * size // 8] = 1
    return {
        "dilate N=3": lambda k: k.dilate(mask, 3),
        "dilate N=9": lambda k: k.dilate(mask, 9),
        "confusion C=18": lambda k: k.confusion(labels_gt, labels_pred, 18),
        "diffuse_fill 100 iters": lambda k: k.diffuse_fill(image, hole, 100, 0.0)[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(args.size, rng).items():
        if not np.array_equal(fn(_pykernels), fn(_ckernels)):
            raise SystemExit(f"{name}: backends disagree")
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{py:>12.3f}{cy:>12.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
