"""Command-line entry point.

Exit codes: 0 success, 1 unexpected failure, 2 usage error or unwritable
output, 3 malformed input file, 4 configuration violation. Results go to
stdout as JSON; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as rio
from .completion import complete_depth
from .config import ConfigError, RunConfig, load_config
from .data import FusionSample
from .geometry import CameraIntrinsics
from .metrics import evaluate_depth
from .pipeline import NoSupervisionError
from .synth import NOISE_PROFILES, SPLITS, make_sample, scene_seed

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_FORMAT, EXIT_CONFIG = 0, 1, 2, 3, 4

log = logging.getLogger("radardepth")


class OutputError(OSError):
    pass


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc}") from None
    return path


def _write(fn, path, *args):
    try:
        fn(path, *args)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


def write_scene(out: Path, sample: FusionSample, noise_name: str) -> None:
    scene = sample.meta["scene"]
    _ensure_dir(out)
    _write(rio.save_pgm, out / "image.pgm", sample.image)
    _write(rio.save_flow, out / "flow.sdm2", sample.flow)
    _write(rio.save_depth, out / "gt.sdm1", sample.gt_depth)
    _write(rio.save_lidar_points, out / "lidar.txt", rio.depth_to_points(sample.lidar, sample.camera))
    _write(rio.save_radar, out / "radar.txt", sample.radar)
    meta = {
        "seed": sample.meta["seed"],
        "camera": sample.camera.to_dict(),
        "noise_profile": noise_name,
        "noise": asdict(NOISE_PROFILES[noise_name]),
        "scene": scene.to_dict(),
        "scene_hash": scene.scene_hash(),
        "elevation": [asdict(r) for r in sample.meta["elevation"]],
    }
    text = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    _write(lambda p, t: Path(p).write_text(t, encoding="utf-8"), out / "meta.json", text)


def read_camera(meta_path) -> CameraIntrinsics:
    try:
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
        return CameraIntrinsics.from_dict(meta["camera"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise rio.FormatError(meta_path, f"bad meta.json ({exc})") from None


def load_scene(scene_dir, with_lidar: bool = True) -> FusionSample:
    d = Path(scene_dir)
    cam = read_camera(d / "meta.json")
    image = rio.load_pgm(d / "image.pgm")
    flow = rio.load_flow(d / "flow.sdm2") if (d / "flow.sdm2").exists() else None
    radar = rio.load_radar(d / "radar.txt")
    lidar = None
    if with_lidar and (d / "lidar.txt").exists():
        lidar = rio.points_to_depth(rio.load_lidar_points(d / "lidar.txt"), cam)
    return FusionSample(image=image, radar=radar, camera=cam, flow=flow, lidar=lidar,
                        meta={"path": str(d)})


def load_scenes(data_dir) -> list[FusionSample]:
    d = Path(data_dir)
    dirs = sorted(p.parent for p in d.glob("*/meta.json"))
    if (d / "meta.json").exists():
        dirs = [d]
    if not dirs:
        raise FileNotFoundError(f"no scene directories with meta.json under {d}")
    return [load_scene(p) for p in dirs]


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


# -- commands --------------------------------------------------------------

def cmd_synth_gen(args) -> int:
    out = _ensure_dir(Path(args.out))
    noise = NOISE_PROFILES[args.noise_profile]
    for i in range(args.scenes):
        seed = scene_seed(args.seed, args.split, i)
        write_scene(out / f"scene_{i:04d}", make_sample(seed, noise), args.noise_profile)
    print(json.dumps({"out": str(out), "scenes": args.scenes, "seed": args.seed, "split": args.split}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.epochs is not None:
        cfg.epochs = args.epochs
        cfg.validate()
    train_set = load_scenes(args.data)
    val = load_scenes(args.val) if args.val else None
    from .pipeline import LateFusionDepthEstimator

    est = LateFusionDepthEstimator.from_config(cfg).fit(train_set, X_val=val)
    out = Path(args.out)
    _ensure_dir(out.parent)
    _write(rio.save_checkpoint, out, est)
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    for rec in est.history_:
        line = json.dumps(rec, sort_keys=True)
        print(line)
        if log_fh:
            log_fh.write(line + "\n")
    if log_fh:
        log_fh.close()
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _config(args)
    tau = cfg.tau if args.tau is None else args.tau
    if not 0 <= tau <= 1:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    est = rio.load_checkpoint(args.ckpt, v=cfg.v, tau=tau, t_abs=cfg.t_abs, t_rel=cfg.t_rel,
                              deterministic=cfg.deterministic)
    sample = load_scene(args.scene, with_lidar=False)
    res = est.predict_one(sample, tau)
    out = Path(args.out)
    _ensure_dir(out.parent)
    _write(rio.save_depth, out, res.em)
    print(json.dumps({"out": str(out), "measured_pixels": res.em.count(), "tau": tau}))
    return EXIT_OK


def cmd_complete(args) -> int:
    em = rio.load_depth(args.em)
    image = rio.load_pgm(args.image)
    dense = complete_depth(em, image)
    _write(rio.save_depth, Path(args.out), dense)
    print(json.dumps({"out": args.out, "filled_pixels": int(np.count_nonzero(~em.mask))}))
    return EXIT_OK


def _load_lm(path, camera_meta):
    p = Path(path)
    if p.suffix == ".txt":
        meta = Path(camera_meta) if camera_meta else p.parent / "meta.json"
        return rio.points_to_depth(rio.load_lidar_points(p), read_camera(meta))
    return rio.load_depth(p)


def cmd_eval(args) -> int:
    pred = rio.load_depth(args.pred).values
    lm = _load_lm(args.lm, args.camera)
    report = evaluate_depth(pred, lm)
    text = report.to_json()
    if args.json:
        _write(lambda p, t: Path(p).write_text(t + "\n", encoding="utf-8"), args.json, text)
    print(text)
    return EXIT_OK


def cmd_render(args) -> int:
    depth = rio.load_depth(args.depth).values
    out = Path(args.out)
    if out.suffix.lower() == ".pgm":
        _write(rio.save_pgm, out, rio.render_depth(depth, args.min, args.max))
    else:
        _write(rio.save_ppm, out, rio.render_depth(depth, args.min, args.max, color=True))
    print(json.dumps({"out": str(out)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radardepth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="generate synthetic scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--scenes", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", choices=list(SPLITS), default="train")
    s.add_argument("--noise-profile", choices=sorted(NOISE_PROFILES), default="default")
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("train", help="train extractor + evaluator")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--val")
    s.add_argument("--epochs", type=int)
    s.add_argument("--log", help="also write the JSON-lines log here")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="estimate the sparse EM for one scene")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tau", type=float)
    s.add_argument("--config")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("complete", help="densify a sparse depth map")
    s.add_argument("--em", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("eval", help="MAE/REL/RMSE over LiDAR pixels")
    s.add_argument("--pred", required=True)
    s.add_argument("--lm", required=True, help="LiDAR as .sdm1 or lidar.txt")
    s.add_argument("--camera", help="meta.json for projecting a lidar.txt")
    s.add_argument("--json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="visualise a depth map")
    s.add_argument("--depth", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min", type=float, default=1.0)
    s.add_argument("--max", type=float, default=80.0)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except rio.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NoSupervisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
