"""``mkmeans`` command line: pack, cluster, validate, bench, synth."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, sequence_store
from ._accel import BACKEND
from .kmeanspp_init import InitConfig
from .mr_engine import EngineConfig
from .multi_k_cluster import ClusterConfig
from .pipeline import PipelineConfig, PipelineError, load_container, run_pipeline, validate_dir

log = logging.getLogger("mkmeans")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_algorithm_args(p):
    p.add_argument("-i", "--input", required=True, type=Path, help="sequence container")
    p.add_argument("-k", "--ks", type=_int_list, default=[5, 6, 7], help="comma-separated k values (default 5,6,7)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=5, help="k-means|| oversampling rounds")
    p.add_argument("--oversample", type=float, default=None, help="oversampling factor l (default 2*max(k))")
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-3, help="center shift threshold in (a*, b*) units")
    p.add_argument("--chunk-size", type=int, default=EngineConfig().chunk_size, help="pixels per map task")


def _pipeline_config(args, workers: int, output_dir=None, **extra) -> PipelineConfig:
    return PipelineConfig(
        ks=tuple(args.ks),
        init=InitConfig(l=args.oversample, rounds=args.rounds, seed=args.seed),
        cluster=ClusterConfig(max_iters=args.max_iters, tol=args.tol),
        engine=EngineConfig(workers=workers, chunk_size=args.chunk_size),
        input_path=args.input,
        output_dir=output_dir,
        **extra,
    )


def cmd_pack(args) -> int:
    entries = []
    for path in args.images:
        payload = path.read_bytes()
        if sequence_store.sniff_format(payload) is None:
            log.warning("%s: not a PNG or PPM file; stored anyway", path)
        entries.append(sequence_store.SequenceEntry(path.name, payload))
    with open(args.output, "wb") as fh:
        size = sequence_store.write_container(fh, entries)
    print(f"packed {len(entries)} images into {args.output} ({size} bytes)")
    return 0


def cmd_cluster(args) -> int:
    cfg = _pipeline_config(
        args, args.workers, output_dir=args.output, label_maps=args.label_maps, dump_pixels=args.dump_pixels
    )
    res = run_pipeline(cfg)
    for k in cfg.ks:
        c = res.clustering
        ssi = f", ssi={res.reports[k].mean_ssi:.6f}" if k in res.reports else ""
        print(f"k={k}: {c.iterations[k]} iterations ({c.stop_reason[k]}), cost={c.cost(k):.6g}{ssi}")
    timing = ", ".join(f"{p}={t:.3f}s" for p, t in res.timings.items())
    print(f"pixels={res.n_points} workers={args.workers} backend={BACKEND} {timing}")
    print(f"best k: {res.best_k}")
    return 0


def cmd_validate(args) -> int:
    reports, best = validate_dir(args.output, chunk_size=args.chunk_size)
    for k, rep in reports.items():
        print(f"{k},{rep.mean_ssi:.9f}")
    print(f"best k: {best}")
    return 0


def cmd_bench(args) -> int:
    points = load_container(args.input)
    cfg = _pipeline_config(args, 1)
    if args.mode == "speedup":
        rows = bench.bench_speedup(points, cfg, args.workers, args.repeats)
    else:
        rows = bench.bench_scaleup(points, cfg, [(w, w) for w in args.workers], args.repeats)
    bench.write_csv(rows, args.output)
    for r in rows:
        print(f"{r.phase:9s} workers={r.workers:<3d} pixels={r.pixels:<10d} {r.seconds:9.4f}s  {args.mode}={r.metric:.3f}")
    return 0


def cmd_synth(args) -> int:
    from .datasets import blob_image

    rng = np.random.default_rng(args.seed)
    entries = []
    for i in range(args.images):
        raster = blob_image(args.width, args.height, args.blobs, rng)
        if args.format == "png":
            entries.append(sequence_store.SequenceEntry(f"synth{i:04d}.png", sequence_store.encode_png(raster)))
        else:
            entries.append(sequence_store.SequenceEntry(f"synth{i:04d}.ppm", sequence_store.encode_ppm(raster)))
    with open(args.output, "wb") as fh:
        size = sequence_store.write_container(fh, entries)
    print(f"wrote {args.images} synthetic {args.format} images ({args.width}x{args.height}) to {args.output} ({size} bytes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkmeans", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="pack image files into a sequence container")
    p.add_argument("images", nargs="+", type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("cluster", help="initialize, cluster and validate for several k")
    _add_algorithm_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", required=True, type=Path, help="output directory")
    p.add_argument("--label-maps", action="store_true", help="write per-image label maps (PPM)")
    p.add_argument("--dump-pixels", action="store_true", help="write the pixel stream as text")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("validate", help="recompute SSI from centroid and points files")
    p.add_argument("-o", "--output", required=True, type=Path, help="directory written by 'cluster'")
    p.add_argument("--chunk-size", type=int, default=EngineConfig().chunk_size)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="speedup or scaleup sweep")
    p.add_argument("mode", choices=("speedup", "scaleup"))
    _add_algorithm_args(p)
    p.add_argument("--workers", type=_int_list, default=[1, 2, 4])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("-o", "--output", required=True, type=Path, help="CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a container of synthetic blob-colored images")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.add_argument("--images", type=int, default=1)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--blobs", type=int, default=5)
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"mkmeans: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"mkmeans: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
