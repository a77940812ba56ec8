"""Lloyd iterations for several k values in shared passes over the data.

Each pass maps every block once and, inside the block, assigns the points
for every still-active partition.  Per-partition partial sums are reduced
in block order, so centers are bit-identical for any worker count.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import kernels
from .model import PartitionModel, rounded_means
from .mr_engine import Engine, EngineConfig
from .points import as_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    max_iters: int = 20
    tol: float = 1e-3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")


@dataclass(frozen=True)
class Assignment:
    pixel: Any
    partition_id: int
    cluster_id: int
    dist_sq: float


def _feature_of(pixel):
    f = getattr(pixel, "feature", pixel)
    return np.asarray(f, dtype=np.float64).reshape(1, 2)


def assign(pixel, model: PartitionModel) -> Assignment:
    """Nearest center of ``model`` for one pixel (or bare (a*, b*) pair)."""
    labels, dsq = kernels.nearest(_feature_of(pixel), model.centers)
    return Assignment(pixel, model.k, int(labels[0]), float(dsq[0]))


def recompute_centers(assignments, k: int) -> PartitionModel:
    """Mean feature per cluster from one partition's assignments.

    An empty cluster is re-seeded at the assigned point with the largest
    squared distance (ties to the earliest), skipping points already used.
    """
    assignments = list(assignments)
    if not assignments:
        raise ValueError(f"partition {k} has no assignments")
    for a in assignments:
        if a.partition_id != k:
            raise ValueError(f"assignment for partition {a.partition_id} passed to partition {k}")
    feats = np.concatenate([_feature_of(a.pixel) for a in assignments])
    labels = np.array([a.cluster_id for a in assignments], dtype=np.int64)
    dsq = np.array([a.dist_sq for a in assignments], dtype=np.float64)
    counts = np.bincount(labels, minlength=k)
    sums = np.stack(
        [np.bincount(labels, weights=feats[:, 0], minlength=k), np.bincount(labels, weights=feats[:, 1], minlength=k)],
        axis=1,
    )
    empty = np.flatnonzero(counts == 0)
    far = _farthest(dsq, feats, np.arange(len(feats)), len(empty))
    centers, sources = _new_centers(counts, sums, empty, far, feats[far] if len(far) else feats[:0])
    return PartitionModel(k, centers, sources)


def _farthest(dsq, feats, index, m):
    """Up to ``m`` indices with the largest ``dsq`` (ties to lowest index), distinct features first."""
    if m == 0 or len(dsq) == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((index, -dsq))
    picked, seen = [], set()
    for i in order:
        key = (feats[i, 0], feats[i, 1])
        if key in seen:
            continue
        seen.add(key)
        picked.append(int(i))
        if len(picked) == m:
            break
    if len(picked) < m:
        # fewer distinct features than empty clusters; allow repeats
        rest = [int(i) for i in order if int(i) not in set(picked)]
        picked.extend(rest[: m - len(picked)])
    return np.asarray(index, dtype=np.int64)[picked]


def _new_centers(counts, sums, empty, far_idx, far_feats):
    k = len(counts)
    centers = np.empty((k, 2), dtype=np.float64)
    nz = counts > 0
    centers[nz] = sums[nz] / counts[nz, None]
    sources = np.full(k, -1, dtype=np.int64)
    for j, (idx, f) in enumerate(zip(far_idx, far_feats)):
        centers[empty[j]] = f
        sources[empty[j]] = idx
    return centers, sources


@dataclass
class ClusterResult:
    models: dict[int, PartitionModel]
    labels: dict[int, np.ndarray]
    history: dict[int, list[float]]
    iterations: dict[int, int]
    stop_reason: dict[int, str]
    changes: dict[int, list[int]] = field(default_factory=dict)

    def cost(self, k: int) -> float:
        return self.history[k][-1]


def _label_dtype(ks):
    return np.uint8 if max(ks) <= 256 else np.int32


def _assign_pass(eng, pts, active, models, labels, first, phase):
    """One shared pass over all blocks; returns per-k reduced statistics."""
    centers = {k: models[k].centers for k in active}
    empty_prev = {k: labels[k][:0] for k in active}

    def block(bi, s, e):
        feats = pts.features(s, e)
        out = {}
        for k in active:
            lab = labels[k][s:e]
            prev = empty_prev[k] if first[k] else lab
            counts, sums, cost, changed = kernels.lloyd_block(feats, centers[k], prev, lab)
            out[k] = (counts, sums, pts.extra_sums(s, e, lab, k), cost, changed)
        return out

    parts = eng.map_blocks(len(pts), block, phase=phase)
    stats = {}
    for k in active:
        counts = np.zeros(k, dtype=np.int64)
        sums = np.zeros((k, 2), dtype=np.float64)
        esums = None
        cost = 0.0
        changed = 0
        for p in parts:
            c, sm, es, co, ch = p[k]
            counts += c
            sums += sm
            if es is not None:
                esums = es.copy() if esums is None else esums + es
            cost += co
            changed += ch
        stats[k] = (counts, sums, esums, cost, changed)
    return stats


def _repair_empty(eng, pts, k, model, empty, phase):
    """Farthest points (w.r.t. ``model``) to re-seed ``empty`` clusters."""
    m = len(empty)
    c = model.centers

    def block(bi, s, e):
        feats = pts.features(s, e)
        dsq = kernels.min_dist_sq(feats, c)
        idx = _farthest(dsq, feats, np.arange(s, e), m)
        return idx, dsq[idx - s]

    parts = eng.map_blocks(len(pts), block, phase=phase)
    idx = np.concatenate([p[0] for p in parts])
    dsq = np.concatenate([p[1] for p in parts])
    feats = pts.take(idx)
    pick = _farthest(dsq, feats, np.arange(len(idx)), m)
    return idx[pick], feats[pick]


def run_multi_k(
    points,
    initial: dict[int, PartitionModel],
    cfg: ClusterConfig | None = None,
    engine: Engine | None = None,
    on_iteration: Callable[[int, int, PartitionModel], None] | None = None,
    phase: str = "cluster",
) -> ClusterResult:
    """Run Lloyd's algorithm for every partition in ``initial``.

    A partition stops when a pass changes no labels, when the largest center
    shift drops below ``cfg.tol``, or after ``cfg.max_iters`` passes.  If the
    stop left labels computed against older centers, one more shared pass
    assigns against the final centers; its cost closes the history.
    """
    cfg = cfg or ClusterConfig()
    pts = as_points(points)
    eng = engine if engine is not None else Engine(EngineConfig())
    ks = sorted(initial)
    if not ks:
        raise ValueError("no partitions to cluster")
    n = len(pts)
    models = {k: PartitionModel(k, initial[k].centers, initial[k].sources) for k in ks}
    dtype = _label_dtype(ks)
    labels = {k: np.zeros(n, dtype=dtype) for k in ks}
    history = {k: [] for k in ks}
    changes = {k: [] for k in ks}
    iterations = {k: 0 for k in ks}
    stop = {}
    first = {k: True for k in ks}
    stale = set()  # labels were computed against superseded centers
    active = list(ks)

    for it in range(1, cfg.max_iters + 1):
        stats = _assign_pass(eng, pts, active, models, labels, first, phase)
        still = []
        for k in active:
            counts, sums, esums, cost, changed = stats[k]
            history[k].append(cost)
            changes[k].append(changed)
            iterations[k] = it
            was_first = first[k]
            first[k] = False
            stale.discard(k)
            if not was_first and changed == 0:
                stop[k] = "membership"
                continue
            empty = np.flatnonzero(counts == 0)
            if len(empty):
                far_idx, far_feats = _repair_empty(eng, pts, k, models[k], empty, phase)
                log.debug("k=%d: re-seeded %d empty clusters", k, len(empty))
            else:
                far_idx, far_feats = np.empty(0, dtype=np.int64), np.empty((0, 2))
            centers, sources = _new_centers(counts, sums, empty, far_idx, far_feats)
            shift = float(np.sqrt(((centers - models[k].centers) ** 2).sum(axis=1)).max())
            if shift > 0.0:
                stale.add(k)
            meta = None
            if esums is not None and esums.shape[1]:
                meta = rounded_means(esums, counts)
                if len(empty):
                    meta[empty] = pts.take_extras(far_idx)
            models[k] = PartitionModel(k, centers, sources, meta)
            if on_iteration is not None:
                on_iteration(k, it, models[k])
            if shift < cfg.tol:
                stop[k] = "shift"
            else:
                still.append(k)
        active = still
        if not active:
            break
    for k in active:
        stop[k] = "max_iters"

    final = [k for k in ks if k in stale]
    if final:
        stats = _assign_pass(eng, pts, final, models, labels, first, phase)
        for k in final:
            history[k].append(stats[k][3])
            changes[k].append(stats[k][4])
    for k in ks:
        log.info("k=%d: %d iterations, stop=%s, cost=%.6g", k, iterations[k], stop[k], history[k][-1])
    return ClusterResult(models, labels, history, iterations, stop, changes)
