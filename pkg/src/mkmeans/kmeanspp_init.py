"""Scalable k-means++ (k-means||) seeding for several k values at once.

One oversampling pass is shared by every requested k: a first center is
drawn uniformly, then for a few rounds each point joins the candidate set
independently with probability ``min(1, l * d2(x, C) / phi(C))``.  The
candidates are weighted by how many points they are nearest to, and each
k gets its own weighted k-means++ reduction of that shared set.

All randomness comes from substreams keyed by ``(seed, purpose, ...)`` so
a run is reproducible for any worker count.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import PartitionModel
from .mr_engine import Engine, EngineConfig
from .points import as_points

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
# substream purposes
_FIRST, _OVERSAMPLE, _REDUCE, _PAD = 0, 1, 2, 3


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & _MASK64, *path])))


@dataclass(frozen=True)
class InitConfig:
    l: float | None = None  # None -> 2 * max(ks)
    rounds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.l is not None and not self.l > 0:
            raise ValueError(f"oversampling factor l must be > 0, got {self.l}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")

    def oversampling(self, ks) -> float:
        return float(self.l) if self.l is not None else 2.0 * max(ks)


@dataclass
class CandidateSet:
    centers: np.ndarray
    weights: np.ndarray
    sources: np.ndarray

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64).reshape(-1, 2)
        n = len(self.centers)
        self.weights = np.zeros(n, dtype=np.int64) if self.weights is None else np.asarray(self.weights, dtype=np.int64)
        self.sources = np.full(n, -1, dtype=np.int64) if self.sources is None else np.asarray(self.sources, dtype=np.int64)
        if len(self.weights) != n or len(self.sources) != n:
            raise ValueError("centers, weights and sources must have equal length")

    def __len__(self):
        return len(self.centers)

    @classmethod
    def from_points(cls, points, idx) -> "CandidateSet":
        idx = np.asarray(idx, dtype=np.int64)
        return cls(points.take(idx), None, idx)


def _engine_or_default(engine):
    return engine if engine is not None else Engine(EngineConfig())


def _centers_of(centers) -> np.ndarray:
    c = centers.centers if isinstance(centers, CandidateSet) else centers
    c = np.ascontiguousarray(c, dtype=np.float64).reshape(-1, 2)
    if len(c) == 0:
        raise ValueError("center set is empty")
    return c


def seed_initial(points, rng: np.random.Generator) -> int:
    """Index of a point drawn uniformly at random (the first center)."""
    n = len(as_points(points))
    if n == 0:
        raise ValueError("cannot seed from an empty point set")
    return int(rng.integers(n))


def cost_phi(points, centers, engine: Engine | None = None) -> float:
    """Sum over points of the squared distance to the nearest center."""
    pts = as_points(points)
    c = _centers_of(centers)
    eng = _engine_or_default(engine)
    partial = eng.map_blocks(
        len(pts),
        lambda bi, s, e: kernels._seq_sum(kernels.min_dist_sq(pts.features(s, e), c)),
        phase="init",
    )
    total = 0.0
    for p in partial:
        total += p
    return total


def oversample_round(
    points,
    current,
    l: float,
    seed: int,
    round_index: int,
    engine: Engine | None = None,
    phi: float | None = None,
) -> np.ndarray:
    """Indices of points sampled in one oversampling round, in ascending order.

    Point x is kept when ``u < l * d2(x, C) / phi`` with ``u`` uniform on
    [0, 1), which is selection with probability ``min(1, l * d2 / phi)``.
    Block ``b`` of round ``r`` draws from ``substream(seed, 1, r, b)``.
    """
    pts = as_points(points)
    c = _centers_of(current)
    eng = _engine_or_default(engine)
    if phi is None:
        phi = cost_phi(pts, c, eng)
    if phi <= 0.0:
        return np.empty(0, dtype=np.int64)
    scale = float(l) / phi

    def sample_block(bi, s, e):
        d2 = kernels.min_dist_sq(pts.features(s, e), c)
        u = substream(seed, _OVERSAMPLE, round_index, bi).random(e - s)
        return s + np.flatnonzero(u < scale * d2)

    picked = eng.map_blocks(len(pts), sample_block, phase="init")
    return np.concatenate(picked).astype(np.int64) if picked else np.empty(0, dtype=np.int64)


def weigh_candidates(points, candidates, engine: Engine | None = None) -> CandidateSet:
    """Weight each candidate by the number of points nearest to it (ties to lowest index)."""
    pts = as_points(points)
    if not isinstance(candidates, CandidateSet):
        candidates = CandidateSet(candidates, None, None)
    c = _centers_of(candidates)
    eng = _engine_or_default(engine)
    counts = eng.map_blocks(
        len(pts),
        lambda bi, s, e: np.bincount(kernels.nearest(pts.features(s, e), c)[0], minlength=len(c)),
        phase="init",
    )
    weights = np.zeros(len(c), dtype=np.int64)
    for part in counts:
        weights += part
    return CandidateSet(c, weights, candidates.sources)


def _weighted_pick(rng, mass) -> int:
    cum = np.cumsum(mass)
    r = rng.random() * cum[-1]
    i = int(np.searchsorted(cum, r, side="right"))
    return min(i, len(mass) - 1)


def reduce_to_k(candidates: CandidateSet, k: int, rng: np.random.Generator) -> np.ndarray:
    """Choose k candidate indices by weighted k-means++ over the candidate set.

    The first pick is proportional to weight; later picks proportional to
    ``weight * d2(c, chosen)``.  When that mass is zero everywhere the pick
    falls back to uniform over unchosen candidates.  With ``len(candidates)
    <= k`` every candidate is returned.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(candidates)
    if n == 0:
        raise ValueError("candidate set is empty")
    if n <= k:
        return np.arange(n, dtype=np.int64)
    c = candidates.centers
    w = candidates.weights.astype(np.float64)
    chosen = np.zeros(n, dtype=bool)
    order = []
    mass = w.copy()
    first = _weighted_pick(rng, mass) if mass.sum() > 0 else int(rng.integers(n))
    order.append(first)
    chosen[first] = True
    d2 = kernels.min_dist_sq(c, c[first : first + 1])
    for _ in range(1, k):
        mass = np.where(chosen, 0.0, w * d2)
        if mass.sum() > 0:
            nxt = _weighted_pick(rng, mass)
        else:
            free = np.flatnonzero(~chosen)
            nxt = int(free[rng.integers(len(free))])
        order.append(nxt)
        chosen[nxt] = True
        d2 = np.minimum(d2, kernels.min_dist_sq(c, c[nxt : nxt + 1]))
    return np.asarray(order, dtype=np.int64)


def _dedupe(cands: CandidateSet) -> CandidateSet:
    """Drop candidates whose feature repeats an earlier one."""
    if len(cands) <= 1:
        return cands
    _, first = np.unique(cands.centers, axis=0, return_index=True)
    keep = np.sort(first)
    return CandidateSet(cands.centers[keep], cands.weights[keep], cands.sources[keep])


def oversample(points, cfg: InitConfig, l: float, engine: Engine | None = None) -> CandidateSet:
    """Shared k-means|| candidate pass: first center, ``cfg.rounds`` rounds, weighting."""
    pts = as_points(points)
    eng = _engine_or_default(engine)
    first = seed_initial(pts, substream(cfg.seed, _FIRST))
    sources = [np.array([first], dtype=np.int64)]
    centers = pts.take(sources[0])
    for r in range(cfg.rounds):
        phi = cost_phi(pts, centers, eng)
        picked = oversample_round(pts, centers, l, cfg.seed, r, eng, phi=phi)
        log.debug("round %d: phi=%.6g, %d new candidates", r, phi, len(picked))
        if len(picked):
            sources.append(picked)
            centers = np.concatenate([centers, pts.take(picked)])
    cands = _dedupe(CandidateSet(centers, None, np.concatenate(sources)))
    return weigh_candidates(pts, cands, eng)


def _pad(n, chosen_sources, need, rng) -> np.ndarray:
    """``need`` distinct point indices not already chosen, uniform over the rest."""
    taken = set(int(s) for s in chosen_sources)
    if n - len(taken) < need:
        raise ValueError(f"cannot pick {need} more distinct points from {n}")
    out = []
    while len(out) < need:
        for i in rng.choice(n, size=min(n, 2 * need + len(taken)), replace=False).tolist():
            if i not in taken:
                taken.add(i)
                out.append(i)
                if len(out) == need:
                    break
    return np.asarray(out, dtype=np.int64)


def init_multi_k(points, ks, cfg: InitConfig | None = None, engine: Engine | None = None) -> dict[int, PartitionModel]:
    """Initial centers for every k in ``ks`` from one shared candidate pass."""
    cfg = cfg or InitConfig()
    pts = as_points(points)
    ks = sorted(set(int(k) for k in ks))
    if not ks:
        raise ValueError("ks must be non-empty")
    n = len(pts)
    for k in ks:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if k > n:
            raise ValueError(f"k={k} exceeds the number of points ({n})")
    eng = _engine_or_default(engine)
    cands = oversample(pts, cfg, cfg.oversampling(ks), eng)
    log.info("k-means|| candidate set: %d distinct candidates", len(cands))
    models = {}
    for k in ks:
        pick = reduce_to_k(cands, k, substream(cfg.seed, _REDUCE, k))
        sources = cands.sources[pick]
        if len(sources) < k:
            extra = _pad(n, sources, k - len(sources), substream(cfg.seed, _PAD, k))
            sources = np.concatenate([sources, extra])
        models[k] = PartitionModel(k, pts.take(sources), sources, pts.take_extras(sources))
    return models

