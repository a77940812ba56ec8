"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_backends.py [--points 2000000] [--k 7] [--repeats 5]

Both backends are loaded side by side; the environment flag
MKMEANS_DISABLE_NUMBA only picks which one the package uses by default.
Results are also checked for bit-identical agreement.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mkmeans import kernels


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2_000_000)
    ap.add_argument("--k", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.NUMBA is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(args.seed)
    feats = rng.normal(0, 30, size=(args.points, 2))
    centers = rng.normal(0, 30, size=(args.k, 2))
    labels = rng.integers(0, args.k, size=args.points).astype(np.uint8)
    extras = rng.integers(0, 256, size=(args.points, 5)).astype(np.int64)
    rgb = extras[:, 2:].copy()
    labels64 = labels.astype(np.int64)
    cluster_rgb = rng.integers(0, 256, size=(args.k, 3)).astype(np.int64)
    xs, ys = extras[:, 0].copy(), extras[:, 1].copy()
    colors = rng.integers(0, 1 << 24, size=args.points).astype(np.uint32)
    widths = np.array([1000], dtype=np.int64)
    offsets = np.array([0, args.points], dtype=np.int64)

    cases = {
        "nearest": lambda ns: ns.nearest(feats, centers),
        "min_dist_sq": lambda ns: ns.min_dist_sq(feats, centers),
        "lloyd_block": lambda ns: ns.lloyd_block(
            feats, centers, labels, np.empty(args.points, dtype=np.uint8)
        ),
        "pixel_sums": lambda ns: ns.pixel_sums(labels, args.k, colors, 0, offsets, widths),
        "ssi_block": lambda ns: ns.ssi_block(feats, centers, labels64, kernels.SSI_EPS),
        "format_points": lambda ns: ns.format_points(args.k, labels64, cluster_rgb, xs, ys, rgb),
    }
    # compile outside the timed region
    small = slice(0, 1000)
    kernels.NUMBA.nearest(feats[small], centers)
    kernels.NUMBA.lloyd_block(feats[small], centers, labels[small], np.empty(1000, dtype=np.uint8))
    kernels.NUMBA.pixel_sums(labels[small], args.k, colors[small], 0, offsets, widths)
    kernels.NUMBA.ssi_block(feats[small], centers, labels64[small], kernels.SSI_EPS)
    kernels.NUMBA.min_dist_sq(feats[small], centers)
    kernels.NUMBA.format_points(args.k, labels64[small], cluster_rgb, xs[small], ys[small], rgb[small])

    print(f"{args.points} points, k={args.k}, best of {args.repeats}")
    print(f"{'kernel':14s} {'numpy s':>10s} {'numba s':>10s} {'ratio':>7s}  identical")
    for name, call in cases.items():
        t_np, out_np = best_of(lambda: call(kernels.NUMPY), args.repeats)
        t_nb, out_nb = best_of(lambda: call(kernels.NUMBA), args.repeats)
        same = _identical(out_np, out_nb)
        print(f"{name:14s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.2f}  {same}")


def _identical(a, b):
    if isinstance(a, tuple):
        return all(_identical(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and bool(np.array_equal(a, b))
    return a == b


if __name__ == "__main__":
    main()
