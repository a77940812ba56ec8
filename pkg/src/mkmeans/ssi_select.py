"""Simplified Silhouette Index per partition and choice of k.

For a point with distance ``a`` to its own center and ``b`` to the nearest
other center the score is ``(b - a) / max(a, b)``; a partition's index is
the plain mean over its points.  Higher is better.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import PartitionModel
from .mr_engine import Engine, EngineConfig
from .points import as_points


@dataclass(frozen=True)
class SSIReport:
    partition_id: int
    mean_ssi: float
    point_count: int

    def __post_init__(self):
        if self.point_count < 1:
            raise ValueError("point_count must be positive")
        if not np.isfinite(self.mean_ssi):
            raise ValueError(f"mean_ssi must be finite, got {self.mean_ssi}")


def point_ssi(own_dist: float, min_other_dist: float) -> float:
    a, b = float(own_dist), float(min_other_dist)
    if a < 0 or b < 0:
        raise ValueError("distances must be non-negative")
    return (b - a) / max(a, b, kernels.SSI_EPS)


def _check_model(model: PartitionModel):
    if model.k < 2:
        raise ValueError("SSI undefined for a single cluster")


def multi_partition_ssi(
    points, labels: dict, models: dict, engine: Engine | None = None, phase: str = "validate"
) -> dict[int, SSIReport]:
    """SSI for several partitions in one shared pass; partitions with k=1 are rejected."""
    pts = as_points(points)
    ks = sorted(models)
    for k in ks:
        _check_model(models[k])
        if len(labels[k]) != len(pts):
            raise ValueError(f"partition {k}: {len(labels[k])} labels for {len(pts)} points")
    n = len(pts)
    if n == 0:
        raise ValueError("no points to validate")
    eng = engine if engine is not None else Engine(EngineConfig())
    centers = {k: models[k].centers for k in ks}

    def block(bi, s, e):
        feats = pts.features(s, e)
        return {k: kernels.ssi_block(feats, centers[k], labels[k][s:e]) for k in ks}

    parts = eng.map_blocks(n, block, phase=phase)
    reports = {}
    for k in ks:
        total = 0.0
        for p in parts:
            total += p[k]
        reports[k] = SSIReport(k, total / n, n)
    return reports


def partition_ssi(points, labels, model: PartitionModel, engine: Engine | None = None) -> SSIReport:
    """Mean simplified silhouette of one partition given its point labels."""
    _check_model(model)
    return multi_partition_ssi(points, {model.k: np.asarray(labels)}, {model.k: model}, engine)[model.k]


def select_k(reports) -> int:
    """k with the highest mean SSI; ties go to the smaller k."""
    if isinstance(reports, dict):
        reports = list(reports.values())
    reports = list(reports)
    if not reports:
        raise ValueError("no SSI reports to select from")
    ids = [r.partition_id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate partition ids in reports: {sorted(ids)}")
    best = min(reports, key=lambda r: (-r.mean_ssi, r.partition_id))
    return best.partition_id
