"""Synthetic data for tests and benchmarks."""
from __future__ import annotations

import numpy as np

from .colorpixel import ab_table
from .sequence_store import Raster


def blob_centers(n_blobs: int, sigma: float, separation: float, rng, box: float | None = None, max_tries: int = 10_000):
    """Random centers whose pairwise distances are all at least ``separation * sigma``."""
    gap = separation * sigma
    box = box if box is not None else gap * max(2.0, np.sqrt(n_blobs)) * 1.5
    centers = []
    tries = 0
    while len(centers) < n_blobs:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {n_blobs} blobs {gap} apart in a box of {box}")
        c = rng.uniform(-box / 2, box / 2, size=2)
        if all(np.hypot(*(c - o)) >= gap for o in centers):
            centers.append(c)
    return np.array(centers)


def gaussian_blobs(n: int, n_blobs: int, rng, sigma: float = 1.0, separation: float = 6.0):
    """``n`` points from ``n_blobs`` isotropic Gaussians; returns ``(points, labels, centers)``."""
    centers = blob_centers(n_blobs, sigma, separation, rng)
    labels = np.arange(n) % n_blobs
    rng.shuffle(labels)
    pts = centers[labels] + rng.normal(0.0, sigma, size=(n, 2))
    return pts, labels, centers


def _nearest_colors(targets, pool=None):
    """Packed 24-bit codes whose (a*, b*) features are closest to ``targets``."""
    table = ab_table()
    pool = np.arange(1 << 24, dtype=np.uint32)[::97] if pool is None else pool
    feats = table[pool]
    out = []
    for t in np.atleast_2d(targets):
        d = ((feats - t) ** 2).sum(axis=1)
        out.append(pool[int(np.argmin(d))])
    return np.array(out, dtype=np.uint32)


def blob_image(width: int, height: int, n_blobs: int, rng, sigma: float = 3.0, separation: float = 8.0) -> Raster:
    """Image whose pixel colors form ``n_blobs`` well-separated clusters in (a*, b*).

    Cluster centers are placed in the (a*, b*) plane, each pixel's target
    feature is drawn around its region's center, and the pixel is given a
    real sRGB color near that target.  Regions are horizontal bands, so the
    image also looks segmented.
    """
    centers = blob_centers(n_blobs, sigma, separation, rng, box=70.0)
    band = (np.arange(height) * n_blobs) // height
    region = np.repeat(band, width)
    # jitter in RGB around each center's color keeps the cost of building large images low
    base = np.array([_rgb_of(c) for c in centers], dtype=np.int64)
    noise = np.rint(rng.normal(0.0, sigma * 0.6, size=(width * height, 3))).astype(np.int64)
    rgb = np.clip(base[region] + noise, 0, 255).astype(np.uint8)
    return Raster(width, height, rgb.reshape(height, width, 3))


def _rgb_of(ab):
    """An sRGB triple whose (a*, b*) is close to ``ab``."""
    code = int(_nearest_colors(np.asarray(ab, dtype=np.float64))[0])
    return (code >> 16) & 0xFF, (code >> 8) & 0xFF, code & 0xFF


def two_color_image(width: int, height: int, a=(200, 30, 30), b=(30, 30, 200)) -> Raster:
    """Left half one color, right half the other."""
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, : width // 2] = a
    px[:, width // 2 :] = b
    return Raster(width, height, px)
