import csv
import json
import math

import numpy as np
import pytest

from reconeval.config import PipelineConfig
from reconeval.core import GrayImage, PointCloud, save_image, save_pointcloud
from reconeval.errors import ConfigError
from reconeval.pcmetrics import chamfer_mean, hausdorff
from reconeval.pipeline import (
    AnomalySpec,
    CaptureRecord,
    StageError,
    group_images,
    load_manifest,
    run_detect_anomaly,
    run_evaluate,
    run_synth_bench,
    write_scene,
)
from reconeval.report import validate_report
from reconeval.synth import DegradeSpec, SceneSpec, degrade

SCENE = SceneSpec(surface_sample_density=6000.0)


def small_config(**paths):
    cfg = PipelineConfig()
    cfg.render.n_views = 4
    cfg.render.width = cfg.render.height = 64
    for k, v in paths.items():
        setattr(cfg.paths, k, str(v))
    return cfg


def rec(t, yaw):
    return CaptureRecord(f"{t}.png", float(t), float(yaw))


# ---- grouping --------------------------------------------------------------------

def test_group_single():
    assert group_images([rec(0, 0)], 0.5, 10) == [[rec(0, 0)]]


def test_group_yaw_jump():
    m = [rec(0, 0), rec(1, 0.1), rec(2, 0.12), rec(3, 3.0)]
    groups = group_images(m, 0.5, 10)
    assert [[r.timestamp for r in g] for g in groups] == [[0, 1, 2], [3]]


def test_group_constant_yaw_uniform_time():
    m = [rec(t, 1.0) for t in range(30)]
    assert len(group_images(m, 0.5, 10)) == 1


def test_group_time_gap_and_sort():
    m = [rec(50, 0), rec(0, 0), rec(1, 0)]
    groups = group_images(m, 0.5, 10)
    assert [[r.timestamp for r in g] for g in groups] == [[0, 1], [50]]


def test_group_yaw_wraps_around_pi():
    m = [rec(0, 3.1), rec(1, -3.1)]
    assert len(group_images(m, 0.5, 10)) == 1


def test_group_partition_property():
    rng = np.random.default_rng(0)
    m = [CaptureRecord(str(i), float(t), float(y)) for i, (t, y) in enumerate(zip(rng.random(50) * 100, rng.uniform(-np.pi, np.pi, 50)))]
    groups = group_images(m, 0.7, 5)
    flat = [r for g in groups for r in g]
    assert sorted(flat, key=lambda r: r.path) == sorted(m, key=lambda r: r.path)
    ts = [r.timestamp for r in flat]
    assert ts == sorted(ts)


def test_group_empty():
    with pytest.raises(ValueError):
        group_images([], 0.5, 10)


def test_manifest_loading(tmp_path):
    (tmp_path / "m.csv").write_text("path,timestamp,yaw,x,y,z\na.png,0,0.1,1,2,3\nb.png,1,0.2,,,\n")
    recs = load_manifest(tmp_path / "m.csv")
    assert recs[0].position == (1.0, 2.0, 3.0) and recs[1].position is None
    (tmp_path / "bad.csv").write_text("path,timestamp,yaw\na.png,0,4.0\n")
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "bad.csv")


# ---- evaluation --------------------------------------------------------------------

@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    paths = write_scene(d, SCENE, DegradeSpec(noise_sigma=0.003, seed=1), AnomalySpec())
    return d, paths


def test_self_evaluation(files):
    _, paths = files
    rep = run_evaluate(small_config(reference=paths["reference"], reconstructed=paths["reference"]))
    pcm, img = rep["pc_metrics"], rep["image_metrics"]
    assert pcm["hausdorff"] == pcm["chamfer_mean"] == pcm["wasserstein"] == 0.0
    assert img["ssim_mean"] == 1.0 and img["psnr_db"] == math.inf
    validate_report(rep)


def test_degraded_evaluation(files, tmp_path):
    _, paths = files
    cfg = small_config(reference=paths["reference"], reconstructed=paths["reconstruction"])
    cfg.render.dump_dir = str(tmp_path / "views")
    rep = run_evaluate(cfg)
    validate_report(rep)
    pcm = rep["pc_metrics"]
    assert pcm["hausdorff"] >= pcm["chamfer_mean"] > 0
    assert rep["evaluation_latency_seconds"] > 0
    assert rep["n_images_used"] <= rep["n_images_taken"]
    assert rep["config"]["render"]["n_views"] == 4
    assert len(rep["inputs"]["reference"]["sha256"]) == 64
    assert sorted(p.name for p in (tmp_path / "views").iterdir())[:2] == ["view_000_rec.png", "view_000_ref.png"]
    assert len(list((tmp_path / "views").iterdir())) == 8


def test_missing_reconstructed_names_field(files):
    _, paths = files
    with pytest.raises(ConfigError) as exc:
        run_evaluate(small_config(reference=paths["reference"]))
    assert exc.value.field == "paths.reconstructed"


def test_stage_errors_are_labelled(tmp_path):
    (tmp_path / "bad.xyz").write_text("1 2 x\n")
    save_pointcloud(PointCloud(np.random.default_rng(0).random((50, 3))), tmp_path / "ok.ply")
    with pytest.raises(StageError) as exc:
        run_evaluate(small_config(reference=tmp_path / "ok.ply", reconstructed=tmp_path / "bad.xyz"))
    assert exc.value.stage == "load:reconstructed"


def test_manifest_counts(files, tmp_path):
    _, paths = files
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    save_image(GrayImage.filled(8, 8, 1), img_dir / "a.png")
    save_image(GrayImage.filled(8, 8, 1), img_dir / "b.png")
    (img_dir / "c.png").write_bytes(b"not a png")
    (tmp_path / "m.csv").write_text("path,timestamp,yaw\na.png,0,0\nb.png,1,0\nc.png,2,0\n")
    cfg = small_config(reference=paths["reference"], reconstructed=paths["reference"], images=img_dir, manifest=tmp_path / "m.csv")
    rep = run_evaluate(cfg)
    assert rep["n_images_taken"] == 3 and rep["n_images_used"] == 2 and rep["image_groups"] == 1


def test_detect_anomaly_run(files):
    _, paths = files
    cfg = small_config(reference=paths["reference"], baseline=paths["reconstruction"], anomalous=paths["anomalous"])
    rep = run_detect_anomaly(cfg)
    validate_report(rep)
    an = rep["anomaly"]
    assert an["detected"] and an["delta_hd"] > 0.02
    assert len(an["anomaly_regions"]) >= 1


def test_synth_sidecars(files):
    d, paths = files
    meta = json.loads((d / "anomalous.json").read_text())
    assert meta["anomaly"]["protrusion"] == 0.04 and meta["degrade"]["noise_sigma"] == 0.003
    assert set(paths) == {"reference", "reconstruction", "anomalous"}


# ---- bench ---------------------------------------------------------------------------------

def test_bench_shape(tmp_path):
    cfg = small_config()
    cfg.report.measure_latency = False
    ladder = [DegradeSpec(noise_sigma=s, seed=11 + k) for k, s in enumerate((0.0005, 0.001, 0.002))]
    rows, text, reports = run_synth_bench(SCENE, ladder, AnomalySpec(), cfg, tmp_path)
    assert len(rows) == 6 and len(reports) == 6
    with open(tmp_path / "bench.csv") as fh:
        table = list(csv.reader(fh))
    assert ",".join(table[0]) == "label,psnr_db,ssim_mean,ssim_std,lpips,hd,wd,latency_s,hd_b,hd_a,delta_hd"
    assert len(table) == 7
    anomalous = [r for r in rows if r["label"].endswith("+anomaly")]
    assert len(anomalous) == 3 and all(r["delta_hd"] > 0 for r in anomalous)
    for name, rep in reports.items():
        validate_report(rep)
        assert (tmp_path / name).exists()
