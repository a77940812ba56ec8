"""End-to-end run: container -> pixels -> k-means|| init -> multi-k Lloyd -> SSI.

Artifacts written to the output directory:

``centroid_<k>.txt``
    ``partitionId,clusterId,x,y,r,g,b,a_star,b_star`` per cluster.  x, y,
    r, g, b are the source pixel for a sampled center and the rounded member
    means for a computed one; a_star, b_star are the exact center, printed
    so they parse back bit for bit.
``points.txt``
    ``partitionId,clusterId,clusterColor,pointX,pointY,pointColor`` for every
    (partition, pixel), partitions ascending, colors as ``r:g:b``.
``ssi.txt``
    ``partitionId,mean_ssi`` per partition (9 decimals), then ``BEST,<k>``.
``labels_<image>_k<k>.ppm``
    optional label maps, each pixel painted with its cluster's color.
``pixels.txt``
    optional pixel dump, ``image_id,x,y,r,g,b`` per pixel.
"""
from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .colorpixel import ab_table, pack_rgb
from .kmeanspp_init import InitConfig, init_multi_k
from .model import PartitionModel
from .mr_engine import Engine, EngineConfig, block_ranges
from .multi_k_cluster import ClusterConfig, ClusterResult, run_multi_k
from .points import ImagePoints, as_points
from .sequence_store import Raster, decode_image, encode_ppm, iter_entries, open_container
from .ssi_select import SSIReport, multi_partition_ssi, select_k

log = logging.getLogger(__name__)

PHASES = ("init", "cluster", "validate")
POINTS_FILE = "points.txt"
SSI_FILE = "ssi.txt"
PIXELS_FILE = "pixels.txt"
_CENTROID_RE = re.compile(r"^centroid_(\d+)\.txt$")
# blocks formatted per write window; bounds memory while formatting in parallel
_WRITE_WINDOW = 64


def centroid_file(k: int) -> str:
    return f"centroid_{k}.txt"


class PipelineError(RuntimeError):
    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"{phase} phase failed: {type(cause).__name__}: {cause}")
        self.phase = phase
        self.__cause__ = cause


@dataclass(frozen=True)
class PipelineConfig:
    ks: tuple[int, ...]
    init: InitConfig = field(default_factory=InitConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    input_path: Path | None = None
    output_dir: Path | None = None
    label_maps: bool = False
    dump_pixels: bool = False

    def __post_init__(self):
        ks = tuple(sorted(set(int(k) for k in self.ks)))
        if not ks:
            raise ValueError("at least one k is required")
        if ks[0] < 1:
            raise ValueError(f"k values must be >= 1, got {ks[0]}")
        if ks[-1] < 2:
            raise ValueError("validation needs at least one k >= 2")
        object.__setattr__(self, "ks", ks)


@dataclass
class PipelineResult:
    ks: tuple[int, ...]
    n_points: int
    initial: dict[int, PartitionModel]
    clustering: ClusterResult
    reports: dict[int, SSIReport]
    best_k: int
    timings: dict[str, float]
    files: list[Path] = field(default_factory=list)


def load_container(path) -> ImagePoints:
    """Decode every image of a container into one pixel table."""
    data = open_container(path)
    items = [(key, decode_image(payload)) for key, payload in iter_entries(data)]
    if not items:
        raise ValueError(f"container {path} holds no images")
    points = ImagePoints.from_rasters(items)
    del items
    if hasattr(data, "close"):
        try:
            data.close()
        except BufferError:  # a decoder still holds a view; the map closes when collected
            pass
    return points


def _phase(name, timings, fn):
    t0 = time.perf_counter()
    try:
        out = fn()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc
    timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0
    return out


def cluster_points(points, cfg: PipelineConfig, engine: Engine, on_init=None, on_iteration=None) -> PipelineResult:
    """Run the three phases on an in-memory point set, timing each one.

    ``on_init(models)`` runs between the init and cluster timers;
    ``on_iteration(k, iteration, model)`` runs inside the cluster phase, so
    benchmarks leave it unset.
    """
    pts = as_points(points)
    timings: dict[str, float] = {}
    ks = cfg.ks
    initial = _phase("init", timings, lambda: init_multi_k(pts, ks, cfg.init, engine))
    if on_init is not None:
        on_init(initial)
    clustering = _phase(
        "cluster", timings, lambda: run_multi_k(pts, initial, cfg.cluster, engine, on_iteration=on_iteration)
    )
    scored = [k for k in ks if k >= 2]
    reports = _phase(
        "validate",
        timings,
        lambda: multi_partition_ssi(
            pts, {k: clustering.labels[k] for k in scored}, {k: clustering.models[k] for k in scored}, engine
        ),
    )
    n = len(pts)
    for k in ks:
        if len(clustering.labels[k]) != n:
            raise PipelineError("cluster", RuntimeError(f"k={k}: {len(clustering.labels[k])} assignments for {n} pixels"))
    for k, rep in reports.items():
        if rep.point_count != n:
            raise PipelineError("validate", RuntimeError(f"k={k}: SSI over {rep.point_count} of {n} pixels"))
    log.info("record counts reconcile: %d pixels, %d assignments per k, %d SSI points per k", n, n, n)
    best = select_k(reports)
    return PipelineResult(ks, n, initial, clustering, reports, best, timings)


# ------------------------------------------------------------------ writers

def _centroid_lines(model: PartitionModel) -> str:
    meta = model.meta if model.meta is not None else np.full((model.k, 5), -1, dtype=np.int64)
    lines = []
    for j in range(model.k):
        x, y, r, g, b = (int(v) for v in meta[j])
        a_star, b_star = (repr(float(v)) for v in model.centers[j])
        lines.append(f"{model.k},{j},{x},{y},{r},{g},{b},{a_star},{b_star}\n")
    return "".join(lines)


def write_centroids(out_dir: Path, model: PartitionModel) -> Path:
    path = Path(out_dir) / centroid_file(model.k)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(_centroid_lines(model), encoding="ascii")
    tmp.replace(path)
    return path


def read_centroids(path) -> PartitionModel:
    rows = [line.split(",") for line in Path(path).read_text(encoding="ascii").splitlines() if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty centroid file")
    k = int(rows[0][0])
    if len(rows) != k or any(int(r[0]) != k for r in rows):
        raise ValueError(f"{path}: expected {k} rows for partition {k}")
    if [int(r[1]) for r in rows] != list(range(k)):
        raise ValueError(f"{path}: cluster ids must run 0..{k - 1}")
    if any(len(r) != 9 for r in rows):
        raise ValueError(f"{path}: expected 9 columns per row")
    meta = np.array([[int(v) for v in r[2:7]] for r in rows], dtype=np.int64)
    centers = np.array([[float(r[7]), float(r[8])] for r in rows])
    return PartitionModel(k, centers, None, meta)


def write_points(out_dir: Path, points: ImagePoints, clustering: ClusterResult, engine: Engine) -> Path:
    path = Path(out_dir) / POINTS_FILE
    blocks = block_ranges(len(points), engine.config.chunk_size)
    with open(path, "wb") as fh:
        for k in sorted(clustering.models):
            model = clustering.models[k]
            crgb = model.meta[:, 2:5]
            labels = clustering.labels[k]

            def fmt(rec):
                s, e = rec
                xs, ys = points.coords(s, e)
                return [(0, kernels.format_points(k, labels[s:e], crgb, xs, ys, points.rgb(s, e)))]

            for w in range(0, len(blocks), _WRITE_WINDOW):
                window = blocks[w : w + _WRITE_WINDOW]
                out = engine.run_job([[b] for b in window], fmt, lambda _k, v: v, phase="write")
                for chunk in out.get(0, []):
                    fh.write(chunk)
    return path


def write_ssi(out_dir: Path, reports: dict[int, SSIReport], best: int) -> Path:
    path = Path(out_dir) / SSI_FILE
    lines = [f"{k},{reports[k].mean_ssi:.9f}\n" for k in sorted(reports)]
    lines.append(f"BEST,{best}\n")
    path.write_text("".join(lines), encoding="ascii")
    return path


def _safe_name(image_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", image_id)


def write_label_maps(out_dir: Path, points: ImagePoints, clustering: ClusterResult) -> list[Path]:
    paths = []
    for i, image_id in enumerate(points.image_ids):
        s, e = int(points.offsets[i]), int(points.offsets[i + 1])
        w, h = int(points.widths[i]), int(points.heights[i])
        for k in sorted(clustering.models):
            crgb = clustering.models[k].meta[:, 2:5].astype(np.uint8)
            px = crgb[clustering.labels[k][s:e]].reshape(h, w, 3)
            path = Path(out_dir) / f"labels_{_safe_name(image_id)}_k{k}.ppm"
            path.write_bytes(encode_ppm(Raster(w, h, px)))
            paths.append(path)
    return paths


def write_pixels(out_dir: Path, points: ImagePoints) -> Path:
    path = Path(out_dir) / PIXELS_FILE
    with open(path, "w", encoding="utf-8") as fh:
        for i, image_id in enumerate(points.image_ids):
            s, e = int(points.offsets[i]), int(points.offsets[i + 1])
            for bs, be in block_ranges(e - s, 1 << 16):
                xs, ys = points.coords(s + bs, s + be)
                rgb = points.rgb(s + bs, s + be)
                fh.writelines(
                    f"{image_id},{x},{y},{r},{g},{b}\n"
                    for x, y, (r, g, b) in zip(xs.tolist(), ys.tolist(), rgb.tolist())
                )
    return path


def run_pipeline(cfg: PipelineConfig, points: ImagePoints | None = None) -> PipelineResult:
    """Load the container (unless ``points`` is given), cluster, validate, write artifacts."""
    if points is None:
        if cfg.input_path is None:
            raise ValueError("no input container given")
        points = load_container(cfg.input_path)
    out_dir = Path(cfg.output_dir) if cfg.output_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for k in cfg.ks:
        if k > len(points):
            raise ValueError(f"k={k} exceeds the number of pixels ({len(points)})")

    def on_iteration(k, it, model):
        if out_dir is not None:
            write_centroids(out_dir, model)

    def on_init(models):
        if out_dir is not None:
            for model in models.values():
                write_centroids(out_dir, model)

    with Engine(cfg.engine) as engine:
        result = cluster_points(points, cfg, engine, on_init=on_init, on_iteration=on_iteration)
        if out_dir is not None:
            t0 = time.perf_counter()
            files = [write_centroids(out_dir, result.clustering.models[k]) for k in cfg.ks]
            files.append(write_points(out_dir, points, result.clustering, engine))
            files.append(write_ssi(out_dir, result.reports, result.best_k))
            if cfg.label_maps:
                files.extend(write_label_maps(out_dir, points, result.clustering))
            if cfg.dump_pixels:
                files.append(write_pixels(out_dir, points))
            result.files = files
            result.timings["write"] = time.perf_counter() - t0
    return result


# ---------------------------------------------------------------- validate

def _iter_points_rows(path, block_bytes=1 << 26):
    """Yield (m, 10) int64 arrays of points-file rows."""
    with open(path, "rb") as fh:
        tail = b""
        while True:
            buf = fh.read(block_bytes)
            if not buf:
                break
            buf = tail + buf
            cut = buf.rfind(b"\n") + 1
            tail = buf[cut:]
            if cut:
                yield _parse_rows(buf[:cut])
        if tail.strip():
            yield _parse_rows(tail + b"\n")


def _parse_rows(buf):
    ints = kernels.parse_ints(buf)
    if len(ints) % 10:
        raise ValueError("points file rows must have 10 integer fields")
    return ints.reshape(-1, 10)


def validate_dir(out_dir, chunk_size: int = EngineConfig().chunk_size) -> tuple[dict[int, SSIReport], int]:
    """Recompute SSI from the centroid and points files in ``out_dir`` and rewrite ``ssi.txt``.

    Points are accumulated per partition in blocks of ``chunk_size`` so the
    sums match the in-pipeline computation with the same chunk size.
    """
    out_dir = Path(out_dir)
    models = {}
    for p in sorted(out_dir.iterdir()):
        m = _CENTROID_RE.match(p.name)
        if m:
            model = read_centroids(p)
            if model.k != int(m.group(1)):
                raise ValueError(f"{p}: rows belong to partition {model.k}")
            models[model.k] = model
    if not models:
        raise FileNotFoundError(f"no centroid_<k>.txt files in {out_dir}")
    table = ab_table()
    totals = {k: 0.0 for k in models}
    counts = {k: 0 for k in models}
    pending = {k: [] for k in models}

    def flush(k, rows):
        rgb = rows[:, 7:10].astype(np.uint8)
        feats = table[pack_rgb(rgb)]
        labels = rows[:, 1]
        if labels.min() < 0 or labels.max() >= k:
            raise ValueError(f"partition {k}: cluster id out of range")
        totals[k] += kernels.ssi_block(feats, models[k].centers, labels)
        counts[k] += len(rows)

    def drain(k, final=False):
        rows = np.concatenate(pending[k]) if len(pending[k]) > 1 else pending[k][0]
        n_full = (len(rows) // chunk_size) * chunk_size
        for s in range(0, n_full, chunk_size):
            flush(k, rows[s : s + chunk_size])
        rest = rows[n_full:]
        if final and len(rest):
            flush(k, rest)
            rest = rest[:0]
        pending[k] = [rest] if len(rest) else []

    for rows in _iter_points_rows(out_dir / POINTS_FILE):
        parts = np.unique(rows[:, 0])
        for k in parts.tolist():
            if k not in models:
                raise ValueError(f"points file references partition {k} with no centroid file")
            pending[k].append(rows[rows[:, 0] == k])
            drain(k)
    for k in models:
        if pending[k]:
            drain(k, final=True)
    reports = {}
    for k in sorted(models):
        if k < 2:
            continue
        if counts[k] == 0:
            raise ValueError(f"partition {k} has no points")
        reports[k] = SSIReport(k, totals[k] / counts[k], counts[k])
    if not reports:
        raise ValueError("no partition with k >= 2 to validate")
    best = select_k(reports)
    write_ssi(out_dir, reports, best)
    return reports, best
