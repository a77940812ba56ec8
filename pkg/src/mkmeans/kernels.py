"""Hot per-block kernels.

Every kernel has a numba implementation (``_nb_*``) and a pure-numpy one
(``_np_*``).  Both accumulate sums sequentially in index order, so the two
backends agree bit for bit.  The module-level names resolve to one backend
at import time (see :mod:`mkmeans._accel`); ``NUMBA`` and ``NUMPY`` expose
both sets for benchmarks and cross-checks.
"""
from __future__ import annotations

import re
from types import SimpleNamespace

import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, USE_NUMBA, njit

SSI_EPS = 1e-12


# ---------------------------------------------------------------- numba path

@njit
def _nb_nearest(feats, centers):
    m = feats.shape[0]
    k = centers.shape[0]
    labels = np.empty(m, dtype=np.int64)
    dsq = np.empty(m, dtype=np.float64)
    for i in range(m):
        fa = feats[i, 0]
        fb = feats[i, 1]
        best = np.inf
        arg = 0
        for j in range(k):
            da = fa - centers[j, 0]
            db = fb - centers[j, 1]
            d = da * da + db * db
            if d < best:
                best = d
                arg = j
        labels[i] = arg
        dsq[i] = best
    return labels, dsq


@njit
def _nb_min_dist_sq(feats, centers):
    m = feats.shape[0]
    k = centers.shape[0]
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        fa = feats[i, 0]
        fb = feats[i, 1]
        best = np.inf
        for j in range(k):
            da = fa - centers[j, 0]
            db = fb - centers[j, 1]
            d = da * da + db * db
            if d < best:
                best = d
        out[i] = best
    return out


@njit
def _nb_lloyd_block(feats, centers, prev, labels_out):
    m = feats.shape[0]
    k = centers.shape[0]
    counts = np.zeros(k, dtype=np.int64)
    sums = np.zeros((k, 2), dtype=np.float64)
    cost = 0.0
    changed = 0
    check = prev.shape[0] == m
    for i in range(m):
        fa = feats[i, 0]
        fb = feats[i, 1]
        best = np.inf
        arg = 0
        for j in range(k):
            da = fa - centers[j, 0]
            db = fb - centers[j, 1]
            d = da * da + db * db
            if d < best:
                best = d
                arg = j
        if check:
            if prev[i] != arg:
                changed += 1
        else:
            changed += 1
        labels_out[i] = arg
        counts[arg] += 1
        sums[arg, 0] += fa
        sums[arg, 1] += fb
        cost += best
    return counts, sums, cost, changed


@njit
def _nb_pixel_sums(labels, k, colors, start, offsets, widths):
    out = np.zeros((k, 5), dtype=np.int64)
    m = labels.shape[0]
    if m == 0:
        return out
    img = np.searchsorted(offsets, start, side="right") - 1
    local = start - offsets[img]
    w = widths[img]
    x = local % w
    y = local // w
    end = offsets[img + 1]
    pos = start
    for i in range(m):
        while pos >= end:
            img += 1
            end = offsets[img + 1]
            w = widths[img]
            x = 0
            y = 0
        c = colors[i]
        j = labels[i]
        out[j, 0] += x
        out[j, 1] += y
        out[j, 2] += (c >> 16) & 255
        out[j, 3] += (c >> 8) & 255
        out[j, 4] += c & 255
        pos += 1
        x += 1
        if x == w:
            x = 0
            y += 1
    return out


@njit
def _nb_ssi_block(feats, centers, labels, eps):
    m = feats.shape[0]
    k = centers.shape[0]
    total = 0.0
    for i in range(m):
        fa = feats[i, 0]
        fb = feats[i, 1]
        own = labels[i]
        da = fa - centers[own, 0]
        db = fb - centers[own, 1]
        a = np.sqrt(da * da + db * db)
        other = np.inf
        for j in range(k):
            if j == own:
                continue
            da = fa - centers[j, 0]
            db = fb - centers[j, 1]
            d = da * da + db * db
            if d < other:
                other = d
        b = np.sqrt(other)
        den = a if a > b else b
        if den < eps:
            den = eps
        total += (b - a) / den
    return total


@njit
def _nb_write_uint(buf, pos, v):
    if v == 0:
        buf[pos] = 48
        return pos + 1
    n = 0
    t = v
    while t > 0:
        n += 1
        t //= 10
    end = pos + n
    while v > 0:
        n -= 1
        buf[pos + n] = 48 + v % 10
        v //= 10
    return end


@njit
def _nb_write_int(buf, pos, v):
    if v < 0:
        buf[pos] = 45
        return _nb_write_uint(buf, pos + 1, -v)
    return _nb_write_uint(buf, pos, v)


@njit
def _nb_format_points(partition, labels, cluster_rgb, xs, ys, rgb):
    m = labels.shape[0]
    # widest line: 5 ints of <=20 chars, 6 small ints, separators
    buf = np.empty(m * 160 + 16, dtype=np.uint8)
    pos = 0
    for i in range(m):
        c = labels[i]
        pos = _nb_write_int(buf, pos, partition)
        buf[pos] = 44
        pos = _nb_write_int(buf, pos + 1, c)
        buf[pos] = 44
        pos = _nb_write_int(buf, pos + 1, cluster_rgb[c, 0])
        buf[pos] = 58
        pos = _nb_write_int(buf, pos + 1, cluster_rgb[c, 1])
        buf[pos] = 58
        pos = _nb_write_int(buf, pos + 1, cluster_rgb[c, 2])
        buf[pos] = 44
        pos = _nb_write_int(buf, pos + 1, xs[i])
        buf[pos] = 44
        pos = _nb_write_int(buf, pos + 1, ys[i])
        buf[pos] = 44
        pos = _nb_write_uint(buf, pos + 1, rgb[i, 0])
        buf[pos] = 58
        pos = _nb_write_uint(buf, pos + 1, rgb[i, 1])
        buf[pos] = 58
        pos = _nb_write_uint(buf, pos + 1, rgb[i, 2])
        buf[pos] = 10
        pos += 1
    return buf[:pos]


@njit
def _nb_parse_ints(buf):
    n = buf.shape[0]
    out = np.empty(n // 2 + 1, dtype=np.int64)
    count = 0
    i = 0
    while i < n:
        ch = buf[i]
        neg = False
        if ch == 45 and i + 1 < n and 48 <= buf[i + 1] <= 57:
            neg = True
            i += 1
            ch = buf[i]
        if 48 <= ch <= 57:
            v = 0
            while i < n and 48 <= buf[i] <= 57:
                v = v * 10 + (buf[i] - 48)
                i += 1
            out[count] = -v if neg else v
            count += 1
        else:
            i += 1
    return out[:count]


# ---------------------------------------------------------------- numpy path

def _np_dist_sq(feats, centers):
    da = feats[:, 0:1] - centers[None, :, 0]
    db = feats[:, 1:2] - centers[None, :, 1]
    return da * da + db * db


def _np_nearest(feats, centers):
    d = _np_dist_sq(feats, centers)
    labels = np.argmin(d, axis=1)
    return labels.astype(np.int64), d[np.arange(len(d)), labels]


def _np_min_dist_sq(feats, centers):
    if len(feats) == 0:
        return np.empty(0, dtype=np.float64)
    return _np_dist_sq(feats, centers).min(axis=1)


def _seq_sum(x):
    """Left-to-right float sum, matching a plain accumulation loop."""
    if len(x) == 0:
        return 0.0
    return float(np.add.accumulate(x)[-1])


def _np_lloyd_block(feats, centers, prev, labels_out):
    k = len(centers)
    labels, dsq = _np_nearest(feats, centers)
    # prev may alias labels_out
    if len(prev) == len(feats):
        changed = int(np.count_nonzero(prev != labels))
    else:
        changed = len(feats)
    labels_out[:] = labels
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    sums = np.empty((k, 2), dtype=np.float64)
    sums[:, 0] = np.bincount(labels, weights=feats[:, 0], minlength=k)
    sums[:, 1] = np.bincount(labels, weights=feats[:, 1], minlength=k)
    return counts, sums, _seq_sum(dsq), changed


def _np_pixel_sums(labels, k, colors, start, offsets, widths):
    idx = np.arange(start, start + len(labels), dtype=np.int64)
    img = np.searchsorted(offsets, idx, side="right") - 1
    local = idx - offsets[img]
    w = widths[img]
    c = colors.astype(np.int64)
    cols = (local % w, local // w, (c >> 16) & 255, (c >> 8) & 255, c & 255)
    lab = labels.astype(np.intp)
    out = np.zeros((k, 5), dtype=np.int64)
    for q, v in enumerate(cols):
        np.add.at(out[:, q], lab, v)
    return out


def _np_ssi_block(feats, centers, labels, eps):
    if len(feats) == 0:
        return 0.0
    d = _np_dist_sq(feats, centers)
    rows = np.arange(len(d))
    a = np.sqrt(d[rows, labels])
    d[rows, labels] = np.inf
    b = np.sqrt(d.min(axis=1))
    den = np.maximum(np.maximum(a, b), eps)
    return _seq_sum((b - a) / den)


def _np_format_points(partition, labels, cluster_rgb, xs, ys, rgb):
    crgb = cluster_rgb[labels]
    lines = [
        f"{partition},{c},{cr[0]}:{cr[1]}:{cr[2]},{x},{y},{p[0]}:{p[1]}:{p[2]}\n"
        for c, cr, x, y, p in zip(labels.tolist(), crgb.tolist(), xs.tolist(), ys.tolist(), rgb.tolist())
    ]
    return np.frombuffer("".join(lines).encode("ascii"), dtype=np.uint8)


_INT_RE = re.compile(rb"-?\d+")


def _np_parse_ints(buf):
    return np.array(_INT_RE.findall(bytes(buf)), dtype=np.int64)


NUMPY = SimpleNamespace(
    name="numpy",
    nearest=_np_nearest,
    min_dist_sq=_np_min_dist_sq,
    lloyd_block=_np_lloyd_block,
    pixel_sums=_np_pixel_sums,
    ssi_block=_np_ssi_block,
    format_points=_np_format_points,
    parse_ints=_np_parse_ints,
)

NUMBA = (
    SimpleNamespace(
        name="numba",
        nearest=_nb_nearest,
        min_dist_sq=_nb_min_dist_sq,
        lloyd_block=_nb_lloyd_block,
        pixel_sums=_nb_pixel_sums,
        ssi_block=_nb_ssi_block,
        format_points=_nb_format_points,
        parse_ints=_nb_parse_ints,
    )
    if HAVE_NUMBA
    else None
)

_ACTIVE = NUMBA if USE_NUMBA else NUMPY


def _f64x2(a):
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 2)


def nearest(feats, centers):
    """Index and squared distance of the nearest center (ties to the lowest index)."""
    return _ACTIVE.nearest(_f64x2(feats), _f64x2(centers))


def min_dist_sq(feats, centers):
    return _ACTIVE.min_dist_sq(_f64x2(feats), _f64x2(centers))


def lloyd_block(feats, centers, prev, labels_out):
    """Assign one block and return ``(counts, sums, cost, changed)``.

    ``prev`` holds the previous labels for the block, or is empty on the
    first pass (every point then counts as changed).  ``labels_out`` is
    written in place.
    """
    counts, sums, cost, changed = _ACTIVE.lloyd_block(_f64x2(feats), _f64x2(centers), prev, labels_out)
    return counts, sums, float(cost), int(changed)


def pixel_sums(labels, k, colors, start, offsets, widths):
    """Per-cluster sums of ``x, y, r, g, b`` as a (k, 5) int64 array.

    ``colors`` are the packed colors of pixels ``start, start+1, ...`` of an
    image table whose images begin at ``offsets`` (with a final total) and
    have the given ``widths``.
    """
    return _ACTIVE.pixel_sums(
        labels, int(k), np.ascontiguousarray(colors, dtype=np.uint32), int(start), offsets, widths
    )


def ssi_block(feats, centers, labels):
    """Sum of per-point simplified silhouette values over one block."""
    return float(_ACTIVE.ssi_block(_f64x2(feats), _f64x2(centers), np.asarray(labels, dtype=np.int64), SSI_EPS))


def format_points(partition, labels, cluster_rgb, xs, ys, rgb) -> bytes:
    return _ACTIVE.format_points(
        int(partition),
        np.asarray(labels, dtype=np.int64),
        np.asarray(cluster_rgb, dtype=np.int64),
        np.asarray(xs, dtype=np.int64),
        np.asarray(ys, dtype=np.int64),
        np.asarray(rgb, dtype=np.int64),
    ).tobytes()


def parse_ints(buf) -> np.ndarray:
    """All (optionally negative) decimal integers in an ASCII buffer, in order."""
    return _ACTIVE.parse_ints(np.frombuffer(buf, dtype=np.uint8))


__all__ = [
    "BACKEND",
    "NUMBA",
    "NUMPY",
    "SSI_EPS",
    "format_points",
    "lloyd_block",
    "min_dist_sq",
    "nearest",
    "parse_ints",
    "pixel_sums",
    "ssi_block",
]
