"""Array-backed point sets the clustering phases iterate over in blocks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .colorpixel import ab_table, pack_rgb, unpack_rgb
from .sequence_store import Raster


class ArrayPoints:
    """Points given directly as an (n, 2) float64 feature array."""

    def __init__(self, feats):
        feats = np.ascontiguousarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != 2:
            raise ValueError(f"expected (n, 2) features, got shape {feats.shape}")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        self._feats = feats

    def __len__(self):
        return len(self._feats)

    def features(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return self._feats[start:stop]

    def take(self, idx) -> np.ndarray:
        return self._feats[np.asarray(idx, dtype=np.intp)]

    def extra_sums(self, start: int, stop: int, labels, k: int) -> None:
        return None

    def take_extras(self, idx) -> None:
        return None


@dataclass
class ImagePoints:
    """All pixels of one or more images, concatenated in row-major order.

    Colors are kept as packed 24-bit codes; (a*, b*) features come from the
    shared lookup table on demand so a block costs one gather.
    """

    colors: np.ndarray
    image_ids: list[str]
    widths: np.ndarray
    heights: np.ndarray
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.colors = np.ascontiguousarray(self.colors, dtype=np.uint32)
        self.widths = np.asarray(self.widths, dtype=np.int64)
        self.heights = np.asarray(self.heights, dtype=np.int64)
        sizes = self.widths * self.heights
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        if self.offsets[-1] != len(self.colors):
            raise ValueError(f"image sizes sum to {self.offsets[-1]}, got {len(self.colors)} colors")

    @classmethod
    def from_rasters(cls, items) -> "ImagePoints":
        """Build from ``(image_id, Raster)`` pairs, packing into one preallocated array."""
        items = list(items)
        ws = [r.width for _, r in items]
        hs = [r.height for _, r in items]
        colors = np.empty(sum(w * h for w, h in zip(ws, hs)), dtype=np.uint32)
        pos = 0
        for _, raster in items:
            for s in range(0, raster.height, 512):
                rows = raster.pixels[s : s + 512]
                m = rows.shape[0] * raster.width
                colors[pos : pos + m] = pack_rgb(rows).reshape(-1)
                pos += m
        return cls(colors, [i for i, _ in items], ws, hs)

    def __len__(self):
        return len(self.colors)

    def features(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return ab_table()[self.colors[start:stop]]

    def take(self, idx) -> np.ndarray:
        return ab_table()[self.colors[np.asarray(idx, dtype=np.intp)]]

    def extra_sums(self, start: int, stop: int, labels, k: int) -> np.ndarray:
        """Per-cluster (k, 5) int64 sums of ``x, y, r, g, b`` over pixels ``[start, stop)``."""
        return kernels.pixel_sums(labels, k, self.colors[start:stop], start, self.offsets, self.widths)

    def take_extras(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty((len(idx), 5), dtype=np.int64)
        for row, i in enumerate(idx.tolist()):
            _, x, y = self.locate(i)
            out[row, :2] = (x, y)
        out[:, 2:] = unpack_rgb(self.colors[idx])
        return out

    def rgb(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return unpack_rgb(self.colors[start:stop])

    def coords(self, start: int = 0, stop: int | None = None):
        """Column and row of each pixel in ``[start, stop)`` within its own image."""
        stop = len(self) if stop is None else stop
        idx = np.arange(start, stop, dtype=np.int64)
        img = np.searchsorted(self.offsets, idx, side="right") - 1
        local = idx - self.offsets[img]
        w = self.widths[img]
        return local % w, local // w

    def locate(self, index: int) -> tuple[str, int, int]:
        img = int(np.searchsorted(self.offsets, index, side="right") - 1)
        local = int(index - self.offsets[img])
        y, x = divmod(local, int(self.widths[img]))
        return self.image_ids[img], x, y

    def raster(self, i: int) -> Raster:
        s, e = self.offsets[i], self.offsets[i + 1]
        return Raster(int(self.widths[i]), int(self.heights[i]), self.rgb(s, e).reshape(self.heights[i], self.widths[i], 3))

    def replicate(self, times: int) -> "ImagePoints":
        """The pixel stream repeated ``times`` over (copies get ``#rep<i>`` ids)."""
        if times < 1:
            raise ValueError("times must be >= 1")
        if times == 1:
            return self
        ids = [iid if r == 0 else f"{iid}#rep{r}" for r in range(times) for iid in self.image_ids]
        return ImagePoints(np.tile(self.colors, times), ids, np.tile(self.widths, times), np.tile(self.heights, times))


def as_points(points):
    """Accept a point-set object or anything convertible to (n, 2) features."""
    if hasattr(points, "features") and hasattr(points, "take"):
        return points
    return ArrayPoints(points)
