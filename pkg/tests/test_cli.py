import json

import pytest

from nested_metaseg import cli, synth, tensor_io
from nested_metaseg.metrics import MetricsTable


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = synth.SynthConfig(rows=48, cols=96, classes=4, n_shapes=4, beta=12.0, blur_radius=1,
                            noise_rate=0.0, c_l=2, n_crop=2, min_extent=4.0, max_extent=12.0, seed=11)
    manifest = synth.write_dataset(cfg, n_scenes=4, out_dir=root, emit="crops",
                                   noise_rates=[0.0, 0.2, 0.35, 0.5])
    return manifest


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_merge_and_heatmaps_and_segments(dataset, tmp_path):
    assert run("merge-crops", "--manifest", dataset, "--out", tmp_path / "m",
               "--image", "scene0000") == 0
    merged = sorted(p.name for p in (tmp_path / "m").iterdir())
    assert merged == ["scene0000_level0.npy", "scene0000_level1.npy", "scene0000_level2.npy",
                      "scene0000_mean.npy"]
    assert run("heatmaps", "--manifest", dataset, "--out", tmp_path / "h", "--image", "scene0001") == 0
    assert len(list((tmp_path / "h").iterdir())) == 7
    assert run("segments", "--manifest", dataset, "--out", tmp_path / "s", "--image", "scene0001") == 0
    ids = tensor_io.load_segment_ids(tmp_path / "s" / "scene0001_segments.npy")
    assert ids.min() >= 1
    text = (tmp_path / "s" / "scene0001_segments.csv").read_text()
    assert text.startswith("segment_id,")


def test_extract_and_reports(dataset, tmp_path):
    out_csv = tmp_path / "metrics.csv"
    assert run("extract-metrics", "--manifest", dataset, "--out", out_csv) == 0
    table = MetricsTable.read_csv(out_csv)
    assert len(table) > 4
    sidecar = json.loads(out_csv.with_suffix(".json").read_text())
    assert sidecar["n_crop"] == 2 and sidecar["classes"] == 4

    assert run("correlate", "--metrics", out_csv, "--out", tmp_path / "corr") == 0
    assert (tmp_path / "corr" / "correlations.csv").is_file()
    assert (tmp_path / "corr" / "correlations.png").is_file()

    assert run("train-meta", "--metrics", out_csv, "--out", tmp_path / "meta",
               "--model", "linear", "--features", "all", "--features", "entropy-baseline",
               "--runs", "3", "--seed", "1") == 0
    report = json.loads((tmp_path / "meta" / "report.json").read_text())
    assert report["runs"] == 3
    assert {e["feature_set"] for e in report["entries"]} == {"all", "entropy-baseline"}
    assert (tmp_path / "meta" / "model_linear_all.json").is_file()

    assert run("select-greedy", "--metrics", out_csv, "--out", tmp_path / "greedy",
               "--criterion", "r2", "--max", "3", "--seed", "0") == 0
    traj = json.loads((tmp_path / "greedy" / "trajectory_r2.json").read_text())
    assert len(traj) == 3


def test_train_meta_logistic_entropy_baseline(tmp_path):
    # noisy dataset so both target classes occur; report carries ACC/AUROC
    # mean and std per split for the single-entropy baseline set
    cfg = synth.SynthConfig(rows=64, cols=128, classes=4, n_shapes=5, beta=12.0, blur_radius=1,
                            noise_rate=0.0, c_l=2, n_crop=2, min_extent=4.0, max_extent=14.0, seed=23)
    manifest = synth.write_dataset(cfg, n_scenes=6, out_dir=tmp_path / "d", emit="crops",
                                   noise_rates=[0.2, 0.35, 0.5])
    out_csv = tmp_path / "metrics.csv"
    assert run("extract-metrics", "--manifest", manifest, "--out", out_csv) == 0
    assert run("train-meta", "--metrics", out_csv, "--out", tmp_path / "meta",
               "--model", "logistic", "--features", "entropy-baseline",
               "--runs", "10", "--seed", "2", "--solver-max-iter", "500") == 0
    report = json.loads((tmp_path / "meta" / "report.json").read_text())
    entry = report["entries"][0]
    assert entry["kind"] == "logistic" and entry["feature_set"] == "entropy-baseline"
    assert entry["features"] == ["entropy_mean"]
    for split in ("train", "val"):
        assert set(entry[f"{split}_mean"]) == {"acc", "auroc"}
        assert set(entry[f"{split}_std"]) == {"acc", "auroc"}
    assert report["runs"] == 10
    assert "baseline" in report


def test_render_subcommand(dataset, tmp_path):
    assert run("heatmaps", "--manifest", dataset, "--out", tmp_path / "h", "--image", "scene0000") == 0
    assert run("segments", "--manifest", dataset, "--out", tmp_path / "s", "--image", "scene0000") == 0
    assert run("render", "--heatmap", tmp_path / "h" / "scene0000_margin_mean.npy",
               "--out", tmp_path / "m.pgm", "--scale-min", "0", "--scale-max", "1") == 0
    assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n")
    assert run("render", "--segments", tmp_path / "s" / "scene0000_segments.npy",
               "--values", tmp_path / "s" / "scene0000_segments.csv",
               "--out", tmp_path / "q.ppm") == 0
    assert (tmp_path / "q.ppm").read_bytes().startswith(b"P6\n")


def test_pipeline_and_regression_guard(dataset, tmp_path):
    # n_crop 0: simulate-crops and plain single-level runs must agree bitwise
    assert run("pipeline", "--manifest", dataset, "--out", tmp_path / "a",
               "--n-crop", "0", "--runs", "2", "--seed", "3") == 0
    assert run("pipeline", "--manifest", dataset, "--out", tmp_path / "b",
               "--n-crop", "0", "--simulate-crops", "--runs", "2", "--seed", "3") == 0
    csv_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    csv_b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert csv_a == csv_b


def test_simulate_crops_required_for_single_field(tmp_path):
    cfg = synth.SynthConfig(rows=32, cols=64, classes=4, n_shapes=3, c_l=2, n_crop=2, seed=2)
    manifest = synth.write_dataset(cfg, n_scenes=1, out_dir=tmp_path / "base", emit="base")
    assert run("extract-metrics", "--manifest", manifest, "--out", tmp_path / "m.csv") == 4
    assert run("extract-metrics", "--manifest", manifest, "--out", tmp_path / "m.csv",
               "--simulate-crops") == 0


def test_exit_codes(tmp_path):
    # missing manifest -> format error (2)
    assert run("extract-metrics", "--manifest", tmp_path / "nope.json", "--out", tmp_path / "x.csv") == 2
    # impossible geometry -> geometry error (3)
    cfg = synth.SynthConfig(rows=32, cols=64, classes=4, n_shapes=3, c_l=2, n_crop=2, seed=2)
    manifest = synth.write_dataset(cfg, n_scenes=1, out_dir=tmp_path / "d", emit="base")
    assert run("extract-metrics", "--manifest", manifest, "--out", tmp_path / "x.csv",
               "--simulate-crops", "--n-crop", "40") == 3
    # single-class training data -> degenerate error (5)
    rows = ["image_id,segment_id,predicted_class,f0,has_ground_truth,iou,iou_adj"]
    rows += [f"i{k},1,0,{k / 10},1,1.0,1.0" for k in range(10)]
    metrics_csv = tmp_path / "metrics.csv"
    metrics_csv.write_text("\n".join(rows) + "\n")
    assert run("train-meta", "--metrics", metrics_csv, "--out", tmp_path / "t",
               "--model", "logistic", "--runs", "2") == 5


def test_config_file_defaults(dataset, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_crop": 0, "runs": 2, "seed": 3}))
    assert run("pipeline", "--manifest", dataset, "--out", tmp_path / "c",
               "--config", config) == 0
    meta_json = json.loads((tmp_path / "c" / "metrics.json").read_text())
    assert meta_json["n_crop"] == 0
    # explicit flags win over the config file
    assert run("pipeline", "--manifest", dataset, "--out", tmp_path / "c2",
               "--config", config, "--n-crop", "1") == 0
    assert json.loads((tmp_path / "c2" / "metrics.json").read_text())["n_crop"] == 1


def test_threads_env_fallback(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert cli._resolve_threads(None) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "0")
    with pytest.raises(Exception):
        cli._resolve_threads(None)
    assert cli._resolve_threads(3) == 3
