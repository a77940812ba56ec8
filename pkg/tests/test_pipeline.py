import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from mkmeans import bench
from mkmeans.cli import main
from mkmeans.colorpixel import ab_features
from mkmeans.datasets import blob_image, two_color_image
from mkmeans.kmeanspp_init import InitConfig
from mkmeans.mr_engine import EngineConfig
from mkmeans.pipeline import (
    PHASES,
    PipelineConfig,
    PipelineError,
    load_container,
    read_centroids,
    run_pipeline,
    validate_dir,
)
from mkmeans.points import ImagePoints
from mkmeans.sequence_store import SequenceEntry, decode_image, encode_png, encode_ppm, pack


def _write_container(path, rasters, fmt="ppm"):
    enc = encode_ppm if fmt == "ppm" else encode_png
    path.write_bytes(pack([SequenceEntry(f"img{i}.{fmt}", enc(r)) for i, r in enumerate(rasters)]))
    return path


def _dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def blob_container(tmp_path_factory):
    rng = np.random.default_rng(0)
    path = tmp_path_factory.mktemp("data") / "blobs.mksq"
    return _write_container(path, [blob_image(60, 50, 5, rng), blob_image(40, 30, 5, rng)])


def test_two_color_image_selects_two(tmp_path):
    container = _write_container(tmp_path / "c.mksq", [two_color_image(8, 8)], fmt="png")
    out = tmp_path / "out"
    res = run_pipeline(PipelineConfig(ks=(2,), input_path=container, output_dir=out))
    assert res.best_k == 2
    lines = (out / "centroid_2.txt").read_text().splitlines()
    assert len(lines) == 2
    assert (out / "ssi.txt").read_text().splitlines() == ["2,1.000000000", "BEST,2"]
    pts = (out / "points.txt").read_text().splitlines()
    assert len(pts) == 64
    # left half is one cluster, right half the other, and colors round-trip
    left = {l.split(",")[1] for l in pts if int(l.split(",")[3]) < 4}
    right = {l.split(",")[1] for l in pts if int(l.split(",")[3]) >= 4}
    assert len(left) == len(right) == 1 and left != right
    colors = {tuple(l.split(",")[4:7]) for l in lines}
    assert colors == {("200", "30", "30"), ("30", "30", "200")}


def test_artifacts_and_formats(tmp_path, blob_container):
    out = tmp_path / "out"
    cfg = PipelineConfig(ks=(5, 6, 7), input_path=blob_container, output_dir=out, engine=EngineConfig(chunk_size=500))
    res = run_pipeline(cfg)
    names = sorted(p.name for p in out.iterdir())
    assert names == ["centroid_5.txt", "centroid_6.txt", "centroid_7.txt", "points.txt", "ssi.txt"]
    ssi = (out / "ssi.txt").read_text().splitlines()
    assert [l.split(",")[0] for l in ssi] == ["5", "6", "7", "BEST"]
    assert all(len(l.split(",")[1].split(".")[1]) == 9 for l in ssi[:3])
    assert ssi[-1] == f"BEST,{res.best_k}"
    n = 60 * 50 + 40 * 30
    assert res.n_points == n
    rows = (out / "points.txt").read_text().splitlines()
    assert len(rows) == 3 * n
    first = rows[0].split(",")
    assert len(first) == 6 and first[0] == "5" and len(first[2].split(":")) == 3
    for k in (5, 6, 7):
        model = read_centroids(out / f"centroid_{k}.txt")
        np.testing.assert_array_equal(model.centers, res.clustering.models[k].centers)
        assert set(res.timings) >= set(PHASES)


def test_rerun_is_byte_identical(tmp_path, blob_container):
    outs = []
    for i, w in enumerate((1, 1, 3)):
        out = tmp_path / f"out{i}"
        cfg = PipelineConfig(
            ks=(3, 5), init=InitConfig(seed=11), engine=EngineConfig(workers=w, chunk_size=700),
            input_path=blob_container, output_dir=out,
        )
        run_pipeline(cfg)
        outs.append(_dir_bytes(out))
    assert outs[0] == outs[1] == outs[2]


def test_best_k_stable_across_seeds(tmp_path, blob_container):
    a = run_pipeline(PipelineConfig(ks=(5,), init=InitConfig(seed=1), input_path=blob_container))
    b = run_pipeline(PipelineConfig(ks=(5,), init=InitConfig(seed=2), input_path=blob_container))
    assert a.n_points == b.n_points and a.best_k == b.best_k == 5


def test_validate_reproduces_pipeline_ssi(tmp_path, blob_container):
    out = tmp_path / "out"
    run_pipeline(PipelineConfig(ks=(4, 5, 6), input_path=blob_container, output_dir=out, engine=EngineConfig(chunk_size=999)))
    before = (out / "ssi.txt").read_bytes()
    (out / "ssi.txt").unlink()
    reports, best = validate_dir(out, chunk_size=999)
    assert (out / "ssi.txt").read_bytes() == before
    assert all(r.point_count == 60 * 50 + 40 * 30 for r in reports.values())


def test_validate_detects_bad_label(tmp_path):
    container = _write_container(tmp_path / "c.mksq", [two_color_image(4, 2)])
    out = tmp_path / "out"
    run_pipeline(PipelineConfig(ks=(2,), input_path=container, output_dir=out))
    text = (out / "points.txt").read_text().replace("2,1,", "2,7,", 1)
    (out / "points.txt").write_text(text)
    with pytest.raises(ValueError, match="out of range"):
        validate_dir(out)


def test_label_maps_and_pixel_dump(tmp_path):
    rng = np.random.default_rng(4)
    img = blob_image(12, 9, 3, rng)
    container = _write_container(tmp_path / "c.mksq", [img])
    out = tmp_path / "out"
    res = run_pipeline(PipelineConfig(ks=(3,), input_path=container, output_dir=out, label_maps=True, dump_pixels=True))
    lm = decode_image((out / "labels_img0.ppm_k3.ppm").read_bytes())
    assert (lm.width, lm.height) == (12, 9)
    crgb = res.clustering.models[3].meta[:, 2:5]
    np.testing.assert_array_equal(lm.pixels.reshape(-1, 3), crgb[res.clustering.labels[3]])
    lines = (out / "pixels.txt").read_text().splitlines()
    assert len(lines) == 108 and lines[13] == "img0.ppm,1,1,{},{},{}".format(*img.pixels[1, 1])


def test_cluster_meta_is_mean_of_members(tmp_path):
    rng = np.random.default_rng(6)
    img = blob_image(20, 20, 3, rng)
    pts = ImagePoints.from_rasters([("a", img)])
    res = run_pipeline(PipelineConfig(ks=(3,), init=InitConfig(seed=3)), points=pts)
    model = res.clustering.models[3]
    labels = res.clustering.labels[3]
    feats = ab_features(img.pixels.reshape(-1, 3))
    for j in range(3):
        members = labels == j
        # once converged by membership the centers are exact member means
        if res.clustering.stop_reason[3] == "membership":
            np.testing.assert_allclose(model.centers[j], feats[members].mean(axis=0), rtol=1e-12)
        mean_rgb = img.pixels.reshape(-1, 3)[members].mean(axis=0)
        assert np.all(np.abs(model.meta[j, 2:] - mean_rgb) <= 0.5 + 1e-9)


def test_k1_is_clustered_but_not_scored(tmp_path):
    container = _write_container(tmp_path / "c.mksq", [two_color_image(8, 8)])
    out = tmp_path / "out"
    res = run_pipeline(PipelineConfig(ks=(1, 2), input_path=container, output_dir=out))
    assert sorted(res.reports) == [2] and (out / "centroid_1.txt").exists()
    assert (out / "ssi.txt").read_text().splitlines()[0].startswith("2,")


def test_config_errors(tmp_path):
    with pytest.raises(ValueError):
        PipelineConfig(ks=())
    with pytest.raises(ValueError):
        PipelineConfig(ks=(1,))
    container = _write_container(tmp_path / "c.mksq", [two_color_image(2, 2)])
    with pytest.raises(ValueError, match="exceeds"):
        run_pipeline(PipelineConfig(ks=(5,), input_path=container))


def test_phase_failure_names_phase():
    pts = ImagePoints.from_rasters([("a", two_color_image(4, 4))])
    with pytest.raises(PipelineError, match="init phase") as info:
        run_pipeline(PipelineConfig(ks=(2,), init=InitConfig(seed=0, rounds=1)), points=_Exploding(pts))
    assert info.value.phase == "init"


class _Exploding:
    def __init__(self, pts):
        self.pts = pts

    def __len__(self):
        return len(self.pts)

    def features(self, s=0, e=None):
        raise OSError("disk on fire")

    def take(self, idx):
        return self.pts.take(idx)


def test_load_container_rejects_empty(tmp_path):
    p = tmp_path / "empty.mksq"
    p.write_bytes(pack([]))
    with pytest.raises(ValueError, match="no images"):
        load_container(p)


# CLI


def test_cli_end_to_end(tmp_path, capsys):
    imgs = []
    for i, r in enumerate([two_color_image(8, 8), two_color_image(6, 4, (10, 200, 10), (200, 200, 10))]):
        p = tmp_path / f"i{i}.png"
        p.write_bytes(encode_png(r))
        imgs.append(str(p))
    container = tmp_path / "c.mksq"
    assert main(["pack", *imgs, "-o", str(container)]) == 0
    out = tmp_path / "out"
    assert main(["cluster", "-i", str(container), "-k", "2,3", "--workers", "2", "--seed", "3", "--rounds", "3",
                 "--oversample", "6", "--max-iters", "10", "--tol", "0.01", "-o", str(out), "--label-maps"]) == 0
    text = capsys.readouterr().out
    assert "best k:" in text
    assert (out / "labels_i0.png_k2.ppm").exists()
    assert main(["validate", "-o", str(out)]) == 0
    assert "best k:" in capsys.readouterr().out


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["cluster", "-i", str(tmp_path / "missing.mksq"), "-k", "2", "-o", str(tmp_path / "o")]) == 1
    assert "mkmeans:" in capsys.readouterr().err
    bad = tmp_path / "bad.mksq"
    bad.write_bytes(b"garbage")
    assert main(["cluster", "-i", str(bad), "-k", "2", "-o", str(tmp_path / "o")]) == 1
    assert "bad magic" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["cluster", "-i", str(bad), "-k", "two", "-o", "x"])


def test_cli_synth_and_bench(tmp_path, capsys):
    container = tmp_path / "s.mksq"
    assert main(["synth", "-o", str(container), "--width", "40", "--height", "30", "--blobs", "3"]) == 0
    csv_path = tmp_path / "speed.csv"
    assert main(["bench", "speedup", "-i", str(container), "-k", "3", "--workers", "1,2", "--repeats", "1",
                 "-o", str(csv_path)]) == 0
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["phase", "workers", "pixels", "seconds", "metric"]
    assert {r[0] for r in rows[1:]} == set(PHASES) and len(rows) == 7
    csv_path = tmp_path / "scale.csv"
    assert main(["bench", "scaleup", "-i", str(container), "-k", "3", "--workers", "1,2", "--repeats", "1",
                 "-o", str(csv_path)]) == 0
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert {int(r["pixels"]) for r in rows} == {1200, 2400}


def test_numpy_backend_produces_identical_artifacts(tmp_path, blob_container):
    outs = {}
    for flag in ("0", "1"):
        out = tmp_path / f"out{flag}"
        env = dict(os.environ, MKMEANS_DISABLE_NUMBA=flag)
        subprocess.run(
            [sys.executable, "-m", "mkmeans.cli", "cluster", "-i", str(blob_container), "-k", "4,5", "-o", str(out),
             "--chunk-size", "800"],
            check=True, env=env, capture_output=True,
        )
        outs[flag] = _dir_bytes(out)
    assert outs["0"] == outs["1"]


# bench


def test_speedup_single_worker_is_one():
    pts = ImagePoints.from_rasters([("a", blob_image(30, 20, 3, np.random.default_rng(1)))])
    rows = bench.bench_speedup(pts, PipelineConfig(ks=(3,)), [1], repeats=1)
    assert [r.phase for r in rows] == list(PHASES)
    assert all(r.metric == 1.0 and r.workers == 1 and r.pixels == 600 for r in rows)


def test_scaleup_self_ratio_and_replication():
    pts = ImagePoints.from_rasters([("a", blob_image(30, 20, 3, np.random.default_rng(1)))])
    rows = bench.bench_scaleup(pts, PipelineConfig(ks=(3,)), [(1, 1), (2, 2), (4, 4)], repeats=1)
    base = [r for r in rows if r.workers == 1]
    assert all(r.metric == 1.0 and r.pixels == 600 for r in base)
    assert sorted({(r.workers, r.pixels) for r in rows}) == [(1, 600), (2, 1200), (4, 2400)]
    assert all(r.seconds > 0 and r.metric > 0 for r in rows)


def test_bench_requires_baseline():
    pts = ImagePoints.from_rasters([("a", two_color_image(4, 4))])
    with pytest.raises(ValueError):
        bench.bench_speedup(pts, PipelineConfig(ks=(2,)), [2, 4])


def test_bench_row_validation():
    with pytest.raises(ValueError):
        bench.BenchRow("write", 1, 10, 1.0, 1.0)
    with pytest.raises(ValueError):
        bench.BenchRow("init", 1, 10, 0.0, 1.0)
