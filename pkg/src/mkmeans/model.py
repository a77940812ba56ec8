from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PartitionModel:
    """The clustering for one k: ``centers[j]`` is cluster j's (a*, b*) center.

    ``sources[j]`` is the index of the data point the center was taken from,
    or -1 once the center is a computed mean.  For image data ``meta[j]``
    holds ``x, y, r, g, b`` of the cluster: the source pixel's values, or
    the rounded member means for a computed center.
    """

    k: int
    centers: np.ndarray
    sources: np.ndarray | None = None
    meta: np.ndarray | None = None

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64).reshape(-1, 2)
        if self.k < 1 or len(self.centers) != self.k:
            raise ValueError(f"partition {self.k} needs exactly {self.k} centers, got {len(self.centers)}")
        if not np.isfinite(self.centers).all():
            raise ValueError(f"partition {self.k} has non-finite centers")
        if self.sources is None:
            self.sources = np.full(self.k, -1, dtype=np.int64)
        else:
            self.sources = np.asarray(self.sources, dtype=np.int64).reshape(self.k)
        if self.meta is not None:
            self.meta = np.asarray(self.meta, dtype=np.int64).reshape(self.k, -1)

    @property
    def partition_id(self) -> int:
        return self.k


def rounded_means(sums, counts) -> np.ndarray:
    """Integer ``sums / counts`` rounded half up, computed exactly."""
    sums = np.asarray(sums, dtype=np.int64)
    c = np.maximum(np.asarray(counts, dtype=np.int64), 1)[:, None]
    return (2 * sums + c) // (2 * c)
