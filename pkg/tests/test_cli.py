import csv
import json

import numpy as np
import pytest

from reconeval.cli import main
from reconeval.core import load_image, load_pointcloud, save_image
from reconeval.synth import textured_frame, warp_image

SMALL = ["--set", "render.n_views=2", "--set", "render.width=48", "--set", "render.height=48"]


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d), "--density", "5000", "--noise", "0.003", "--anomaly"]) == 0
    return d


def test_synth_outputs(scene_dir):
    for name in ("reference", "reconstruction", "anomalous"):
        assert len(load_pointcloud(scene_dir / f"{name}.ply")) > 1000
        assert (scene_dir / f"{name}.json").exists()


def test_evaluate_to_file(scene_dir, tmp_path):
    out = tmp_path / "r.json"
    code = main(["evaluate", "--reference", str(scene_dir / "reference.ply"),
                 "--reconstructed", str(scene_dir / "reconstruction.ply"), "--out", str(out), *SMALL])
    assert code == 0
    text = out.read_text()
    rep = json.loads(text)
    assert rep["tool"] == "reconeval" and rep["config"]["render"]["n_views"] == 2
    assert list(rep) == sorted(rep)


def test_evaluate_stdout(scene_dir, capsys):
    ref = str(scene_dir / "reference.ply")
    assert main(["evaluate", "--reference", ref, "--reconstructed", ref, *SMALL]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["image_metrics"]["psnr_db"] == "inf" and rep["pc_metrics"]["hausdorff"] == 0.0


def test_missing_path_exit_code(scene_dir, capsys):
    assert main(["evaluate", "--reference", str(scene_dir / "reference.ply")]) == 2
    assert "paths.reconstructed" in capsys.readouterr().err


def test_bad_config_file_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("render:\n  colour: 1\n")
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "render.colour" in capsys.readouterr().err


def test_bad_set_value(scene_dir, capsys):
    ref = str(scene_dir / "reference.ply")
    assert main(["evaluate", "--reference", ref, "--reconstructed", ref, "--set", "render.n_views"]) == 2


def test_unreadable_cloud_exit_code(tmp_path, scene_dir, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_text("not a ply\n")
    assert main(["evaluate", "--reference", str(scene_dir / "reference.ply"), "--reconstructed", str(bad), *SMALL]) == 1
    assert "load:reconstructed" in capsys.readouterr().err


def test_detect_anomaly(scene_dir, tmp_path):
    out, ply = tmp_path / "a.json", tmp_path / "dev.ply"
    code = main(["detect-anomaly", "--reference", str(scene_dir / "reference.ply"),
                 "--baseline", str(scene_dir / "reconstruction.ply"),
                 "--anomalous", str(scene_dir / "anomalous.ply"),
                 "--dump-ply", str(ply), "--out", str(out), *SMALL])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["anomaly"]["detected"] is True
    assert len(load_pointcloud(ply)) > 0


def test_render_views(scene_dir, tmp_path):
    code = main(["render-views", "--reference", str(scene_dir / "reference.ply"), "--out", str(tmp_path), *SMALL])
    assert code == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 4
    assert load_image(tmp_path / files[0]).width == 48


def test_sweep_ransac(tmp_path):
    a = textured_frame(seed=5)
    b = warp_image(a, np.array([[1, 0, 3.0], [0, 1, -2.0], [0, 0, 1]]))
    save_image(a, tmp_path / "a.png")
    save_image(b, tmp_path / "b.png")
    out = tmp_path / "sweep.csv"
    code = main(["sweep-ransac", str(tmp_path / "a.png"), str(tmp_path / "b.png"),
                 "--budgets", "0", "50", "--repeats", "2", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4
    assert [int(r["inlier_count"]) for r in rows if r["budget"] == "0"] == [0, 0]
    assert all(int(r["inlier_count"]) > 0 for r in rows if r["budget"] == "50")


def test_bench_cli(tmp_path, capsys):
    code = main(["bench", "--out", str(tmp_path), "--density", "4000", "--sigmas", "0.001",
                 "--no-latency", *SMALL])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("label,psnr_db") and len(lines) == 3
    assert (tmp_path / "bench.csv").exists() and len(list(tmp_path.glob("report_*.json"))) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
