import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from radardepth import io as rio
from radardepth.cli import main, read_camera


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _tree(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def scenes(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["synth-gen", "--out", str(root / "train"), "--scenes", "3", "--seed", "0"]) == 0
    assert main(["synth-gen", "--out", str(root / "test"), "--scenes", "1", "--seed", "0",
                 "--split", "test"]) == 0
    return root


@pytest.fixture(scope="module")
def checkpoint(scenes, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    cfg = out.parent / "run.cfg"
    cfg.write_text("epochs = 1\nlr = 1e-3\n")
    assert main(["train", "--data", str(scenes / "train"), "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_synth_gen_layout(scenes):
    d = scenes / "train" / "scene_0000"
    assert sorted(p.name for p in d.iterdir()) == [
        "flow.sdm2", "gt.sdm1", "image.pgm", "lidar.txt", "meta.json", "radar.txt"]
    meta = json.loads((d / "meta.json").read_text())
    assert {"seed", "camera", "elevation", "scene_hash"} <= set(meta)
    assert len(meta["elevation"]) == len(rio.load_radar(d / "radar.txt"))


def test_synth_gen_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run(["synth-gen", "--out", tmp_path / name, "--scenes", 1, "--seed", 11], capsys)
        assert code == 0 and json.loads(out)["scenes"] == 1
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_seed_changes_scene_hash(tmp_path, capsys):
    hashes = []
    for seed in (1, 2):
        run(["synth-gen", "--out", tmp_path / str(seed), "--scenes", 1, "--seed", seed], capsys)
        hashes.append(json.loads((tmp_path / str(seed) / "scene_0000" / "meta.json").read_text())["scene_hash"])
    assert hashes[0] != hashes[1]


def test_gt_roundtrip(scenes, tmp_path):
    src = scenes / "train" / "scene_0000" / "gt.sdm1"
    rio.save_depth(tmp_path / "gt.sdm1", rio.load_depth(src))
    assert (tmp_path / "gt.sdm1").read_bytes() == src.read_bytes()


def test_eval_pred_equals_lm(scenes, tmp_path, capsys):
    d = scenes / "train" / "scene_0001"
    lm = rio.points_to_depth(rio.load_lidar_points(d / "lidar.txt"), read_camera(d / "meta.json"))
    rio.save_depth(tmp_path / "lm.sdm1", lm)
    code, out, _ = run(["eval", "--pred", tmp_path / "lm.sdm1", "--lm", tmp_path / "lm.sdm1",
                        "--json", tmp_path / "r.json"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["mae"] == rep["rel"] == rep["rmse"] == 0.0
    assert rep["evaluated_pixel_count"] == lm.count()
    assert json.loads((tmp_path / "r.json").read_text()) == rep
    # against the text point file only float32 storage error remains
    code, out, _ = run(["eval", "--pred", tmp_path / "lm.sdm1", "--lm", d / "lidar.txt"], capsys)
    assert code == 0 and json.loads(out)["mae"] < 1e-5


def test_infer_tau_one_gives_empty_em(checkpoint, scenes, tmp_path, capsys):
    code, out, _ = run(["infer", "--ckpt", checkpoint, "--scene", scenes / "test" / "scene_0000",
                        "--out", tmp_path / "em.sdm1", "--tau", "1.0"], capsys)
    assert code == 0 and json.loads(out)["measured_pixels"] == 0
    assert rio.load_depth(tmp_path / "em.sdm1").count() == 0


def test_five_command_pipeline(checkpoint, scenes, tmp_path, capsys):
    scene = scenes / "test" / "scene_0000"
    em, dense = tmp_path / "em.sdm1", tmp_path / "dense.sdm1"
    code, out, _ = run(["infer", "--ckpt", checkpoint, "--scene", scene, "--out", em, "--tau", "0.0"], capsys)
    assert code == 0 and json.loads(out)["measured_pixels"] > 0
    code, _, _ = run(["complete", "--em", em, "--image", scene / "image.pgm", "--out", dense], capsys)
    assert code == 0 and rio.load_depth(dense).count() == 192 * 400
    code, out, _ = run(["eval", "--pred", dense, "--lm", scene / "lidar.txt", "--json", tmp_path / "r.json"],
                       capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["rmse"] >= rep["mae"] > 0 and rep["evaluated_pixel_count"] > 0
    code, _, _ = run(["render", "--depth", em, "--out", tmp_path / "em.ppm"], capsys)
    assert code == 0 and (tmp_path / "em.ppm").read_bytes().startswith(b"P6\n400 192\n255\n")
    code, _, _ = run(["render", "--depth", dense, "--out", tmp_path / "dense.pgm", "--min", 2, "--max", 60],
                     capsys)
    assert code == 0 and (tmp_path / "dense.pgm").read_bytes().startswith(b"P5\n")


def test_train_log_lines(scenes, tmp_path, capsys):
    log = tmp_path / "train.jsonl"
    code, out, _ = run(["train", "--data", scenes / "train", "--out", tmp_path / "m.ckpt", "--epochs", 2,
                        "--val", scenes / "test", "--log", log], capsys)
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert [r["epoch"] for r in lines] == [1, 2]
    assert {"loss", "val_auc"} <= set(lines[0])
    assert [json.loads(line) for line in log.read_text().splitlines()] == lines


def test_bad_magic_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.sdm1"
    bad.write_bytes(b"JUNK" + bytes(8))
    code, out, err = run(["render", "--depth", bad, "--out", tmp_path / "x.pgm"], capsys)
    assert code == 3 and out == "" and str(bad) in err


def test_config_violation_exit_4(scenes, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("tau = 0.5\nwarp_speed = 9\n")
    code, out, err = run(["train", "--data", scenes / "train", "--config", cfg, "--out", tmp_path / "m"], capsys)
    assert code == 4 and out == "" and "warp_speed" in err


def test_unwritable_output_exit_2(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(["synth-gen", "--out", blocker / "sub", "--scenes", 1], capsys)
    assert code == 2 and err


def test_missing_input_exit_2(tmp_path, capsys):
    code, _, _ = run(["render", "--depth", tmp_path / "nope.sdm1", "--out", tmp_path / "x.pgm"], capsys)
    assert code == 2


def test_usage_error_exit_2():
    proc = subprocess.run([sys.executable, "-m", "radardepth.cli", "frobnicate"], capture_output=True)
    assert proc.returncode == 2 and proc.stdout == b""


def test_render_pgm_and_ppm_values(tmp_path, capsys):
    depth = np.array([[1.0, 0.0], [80.0, 4.0]])
    rio.save_depth(tmp_path / "d.sdm1", depth)
    run(["render", "--depth", tmp_path / "d.sdm1", "--out", tmp_path / "d.ppm"], capsys)
    blob = (tmp_path / "d.ppm").read_bytes()
    px = np.frombuffer(blob[len(b"P6\n2 2\n255\n"):], dtype=np.uint8).reshape(2, 2, 3)
    assert tuple(px[0, 1]) == (255, 0, 0)
    assert tuple(px[0, 0]) == (255, 255, 255) and tuple(px[1, 0]) == (0, 0, 0)
