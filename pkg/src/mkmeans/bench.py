"""Speedup and scaleup sweeps over engine worker counts.

Workers stand in for cluster nodes.  Speedup is ``T(1 worker) / T(n
workers)`` on fixed data; scaleup is ``T(1 worker, base data) / T(n
workers, n x base data)``.  Each configuration is run ``repeats`` times and
the median phase time is reported.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import statistics
from dataclasses import dataclass

from .mr_engine import Engine, EngineConfig
from .pipeline import PHASES, PipelineConfig, cluster_points
from .points import ImagePoints

log = logging.getLogger(__name__)

CSV_HEADER = ("phase", "workers", "pixels", "seconds", "metric")


@dataclass(frozen=True)
class BenchRow:
    phase: str
    workers: int
    pixels: int
    seconds: float
    metric: float

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if not self.seconds > 0:
            raise ValueError(f"seconds must be positive, got {self.seconds}")


def _with_workers(cfg: PipelineConfig, workers: int) -> PipelineConfig:
    return dataclasses.replace(cfg, engine=EngineConfig(workers=workers, chunk_size=cfg.engine.chunk_size))


def time_phases(points, cfg: PipelineConfig, workers: int, repeats: int = 3) -> dict[str, float]:
    """Median wall time of each phase over ``repeats`` back-to-back runs."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    samples = {p: [] for p in PHASES}
    run_cfg = _with_workers(cfg, workers)
    for r in range(repeats):
        with Engine(run_cfg.engine) as engine:
            res = cluster_points(points, run_cfg, engine)
        for p in PHASES:
            samples[p].append(max(res.timings[p], 1e-9))
        log.info("workers=%d repeat %d: %s", workers, r, {p: round(res.timings[p], 4) for p in PHASES})
    return {p: statistics.median(v) for p, v in samples.items()}


def warm_up(points, cfg: PipelineConfig):
    """Compile kernels and build lookup tables outside the timed runs."""
    n = min(len(points), 4096)
    if isinstance(points, ImagePoints):
        small = ImagePoints(points.colors[:n], ["warmup"], [n], [1])
    else:
        small = points.features(0, n)
    ks = tuple(k for k in cfg.ks if k <= n) or (2,)
    with Engine(EngineConfig(workers=1, chunk_size=cfg.engine.chunk_size)) as engine:
        cluster_points(small, dataclasses.replace(cfg, ks=ks), engine)


def bench_speedup(points, cfg: PipelineConfig, worker_list, repeats: int = 3) -> list[BenchRow]:
    worker_list = sorted(set(int(w) for w in worker_list))
    if 1 not in worker_list:
        raise ValueError("worker list must include 1 (the speedup baseline)")
    warm_up(points, cfg)
    times = {w: time_phases(points, cfg, w, repeats) for w in worker_list}
    n = len(points)
    rows = []
    for phase in PHASES:
        base = times[1][phase]
        for w in worker_list:
            rows.append(BenchRow(phase, w, n, times[w][phase], base / times[w][phase]))
    return rows


def bench_scaleup(points: ImagePoints, cfg: PipelineConfig, scale_list, repeats: int = 3) -> list[BenchRow]:
    """``scale_list`` holds ``(workers, data multiplier)`` pairs; the pixel stream is replicated."""
    scale_list = [(int(w), int(m)) for w, m in scale_list]
    if any(w < 1 or m < 1 for w, m in scale_list):
        raise ValueError("workers and multipliers must be >= 1")
    warm_up(points, cfg)
    base = time_phases(points, cfg, 1, repeats)
    rows = []
    for w, m in scale_list:
        data = points.replicate(m)
        t = base if (w, m) == (1, 1) else time_phases(data, cfg, w, repeats)
        for phase in PHASES:
            rows.append(BenchRow(phase, w, len(data), t[phase], base[phase] / t[phase]))
    rows.sort(key=lambda r: (PHASES.index(r.phase), r.workers, r.pixels))
    return rows


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.phase, r.workers, r.pixels, f"{r.seconds:.6f}", f"{r.metric:.6f}"])
