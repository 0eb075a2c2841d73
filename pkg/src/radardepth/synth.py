"""Synthetic scenes and sensors: ray-cast ground truth, LiDAR, elevation-blind radar.

Scenes are a ground plane plus axis-aligned boxes standing on it, seen by a
forward-looking pinhole camera. The radar sits at camera height and reports
range and azimuth only; the elevation of the reflecting point is kept in a
separate record so tests can check the expansion window against the truth.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import FusionSample
from .geometry import CameraIntrinsics, RadarReturn, horizon_row, round_half_up
from .sparse_depth import SparseDepthMap

SKY_INTENSITY = 1.0
LIGHT_DIR = np.array([-0.4, -1.0, -0.3]) / np.linalg.norm([-0.4, -1.0, -0.3])
AMBIENT = 0.35

SKY, GROUND = -1, 0  # values of the hit-id map; boxes are 1..n


def default_camera() -> CameraIntrinsics:
    """400x192 camera whose 20 degree upward window spans 60 rows."""
    return CameraIntrinsics(fx=164.8, fy=164.8, cx=199.5, cy=96.0, width=400, height=192)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    albedo: float

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.size) / 2

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.size) / 2


@dataclass
class Scene:
    camera: CameraIntrinsics
    boxes: list[Box]
    camera_height: float = 1.5  # ground plane sits at y = +camera_height
    ground_albedo: float = 0.45
    # lateral-dominant motion keeps the focus of expansion outside the frame
    ego_translation: tuple[float, float, float] = (1.0, 0.0, 0.5)
    d_max: float = 80.0
    seed: int | None = None

    def __post_init__(self):
        for b in self.boxes:
            front = b.center[2] - b.size[2] / 2
            if not 2.0 <= front <= self.d_max:
                raise ValueError(f"box front face at z={front:.2f} outside [2, {self.d_max}]")
            if not 0.0 <= b.albedo <= 1.0:
                raise ValueError(f"albedo {b.albedo} outside [0, 1]")
        albedos = sorted(b.albedo for b in self.boxes)
        if any(b - a < 0.05 - 1e-9 for a, b in zip(albedos, albedos[1:])):
            raise ValueError("box albedos must differ pairwise by at least 0.05")

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "boxes": [asdict(b) for b in self.boxes],
            "camera_height": self.camera_height,
            "ground_albedo": self.ground_albedo,
            "ego_translation": list(self.ego_translation),
            "d_max": self.d_max,
            "seed": self.seed,
        }

    def scene_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class SensorNoise:
    lidar_sigma: float = 0.02
    radar_sigma: float = 0.1
    elevation_bound_deg: float = 20.0
    clutter_rate: float = 3.0  # Poisson mean of spurious returns per frame
    lidar_row_step: int = 4
    lidar_dropout: float = 0.2

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0, got {v}")
        if self.lidar_row_step < 1:
            raise ValueError("lidar_row_step must be >= 1")


NOISE_PROFILES = {
    "default": SensorNoise(),
    "clean": SensorNoise(lidar_sigma=0.0, radar_sigma=0.0, clutter_rate=0.0),
    "heavy": SensorNoise(lidar_sigma=0.05, radar_sigma=0.2, clutter_rate=6.0),
}


@dataclass
class Rendering:
    depth: np.ndarray  # (H, W) z-depth, 0 where no geometry within d_max
    intensity: np.ndarray  # (H, W) in [0, 1], 8-bit quantised
    flow: np.ndarray  # (2, H, W) pixels
    hit_id: np.ndarray  # (H, W) SKY, GROUND or 1-based box index
    hit_depth: np.ndarray  # (H, W) z-depth of the hit, inf for sky, not range-limited


@dataclass
class ElevationRecord:
    """Truth kept aside for each radar return; ``box`` is None for clutter."""

    box: int | None
    true_y: float | None
    true_row: int | None


def random_scene(seed: int, camera: CameraIntrinsics | None = None, n_boxes=(4, 10),
                 z_range=(5.0, 70.0), **kwargs) -> Scene:
    rng = np.random.default_rng(seed)
    cam = camera or default_camera()
    scene_kw = dict(kwargs)
    ground_albedo = scene_kw.pop("ground_albedo", 0.45)
    h_cam = scene_kw.get("camera_height", 1.5)
    n = int(rng.integers(n_boxes[0], n_boxes[1] + 1))
    pool = [a for a in np.round(np.arange(0.10, 0.951, 0.05), 2) if abs(a - ground_albedo) > 1e-9]
    albedos = rng.choice(pool, size=n, replace=False)
    half_fov = math.atan((cam.width / 2) / cam.fx)
    boxes = []
    for i in range(n):
        z_front = float(rng.uniform(*z_range))
        sx = float(rng.uniform(1.5, 4.0))
        sy = float(rng.uniform(2.0, 4.5))
        sz = float(rng.uniform(1.0, 4.0))
        ang = float(rng.uniform(-0.8, 0.8) * half_fov)
        cx = math.tan(ang) * z_front
        boxes.append(Box((cx, h_cam - sy / 2, z_front + sz / 2), (sx, sy, sz), float(albedos[i])))
    return Scene(cam, boxes, ground_albedo=ground_albedo, seed=seed, **scene_kw)


def _ray_dirs(cam: CameraIntrinsics) -> np.ndarray:
    u = np.arange(cam.width, dtype=np.float64)
    v = np.arange(cam.height, dtype=np.float64)
    d = np.empty((3, cam.height, cam.width))
    d[0] = ((u - cam.cx) / cam.fx)[None, :]
    d[1] = ((v - cam.cy) / cam.fy)[:, None]
    d[2] = 1.0
    return d


def _slab(d: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Ray/box intersection for rays from the origin; returns (t_hit, face_axis)."""
    tmin = np.full(d.shape[1:], -np.inf)
    tmax = np.full(d.shape[1:], np.inf)
    axis = np.zeros(d.shape[1:], dtype=np.int64)
    sign = np.zeros(d.shape[1:])
    for a in range(3):
        da = d[a]
        par = da == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = lo[a] / da
            t2 = hi[a] / da
        near = np.where(par, np.where((lo[a] <= 0) & (0 <= hi[a]), -np.inf, np.inf), np.minimum(t1, t2))
        far = np.where(par, np.where((lo[a] <= 0) & (0 <= hi[a]), np.inf, -np.inf), np.maximum(t1, t2))
        upd = near > tmin
        axis = np.where(upd, a, axis)
        sign = np.where(upd, np.where(da > 0, -1.0, 1.0), sign)
        tmin = np.maximum(tmin, near)
        tmax = np.minimum(tmax, far)
    hit = (tmin <= tmax) & (tmin > 0)
    return np.where(hit, tmin, np.inf), axis, sign


def render_scene(scene: Scene) -> Rendering:
    """Ray-cast depth, shaded intensity and the analytic flow of the ego motion."""
    cam = scene.camera
    d = _ray_dirs(cam)
    best = np.full(cam.shape, np.inf)
    hit_id = np.full(cam.shape, SKY, dtype=np.int64)
    normal = np.zeros((3,) + cam.shape)
    albedo = np.zeros(cam.shape)

    with np.errstate(divide="ignore"):
        tg = np.where(d[1] > 0, scene.camera_height / d[1], np.inf)
    g = tg < best
    best[g] = tg[g]
    hit_id[g] = GROUND
    normal[1][g] = -1.0
    albedo[g] = scene.ground_albedo

    for i, box in enumerate(scene.boxes, start=1):
        t, axis, sign = _slab(d, box.lo, box.hi)
        m = t < best
        best[m] = t[m]
        hit_id[m] = i
        normal[:, m] = 0.0
        for a in range(3):
            sel = m & (axis == a)
            normal[a][sel] = sign[sel]
        albedo[m] = box.albedo

    if not np.any(np.isfinite(best)):
        raise ValueError("no geometry in the camera frustum")

    # rays have unit z-component, so the ray parameter equals z-depth
    depth = np.where(best <= scene.d_max, best, 0.0)
    shade = AMBIENT + (1 - AMBIENT) * np.clip(np.einsum("chw,c->hw", normal, LIGHT_DIR), 0, None)
    intensity = np.where(hit_id == SKY, SKY_INTENSITY, albedo * shade)
    intensity = np.round(np.clip(intensity, 0, 1) * 255) / 255

    tx, ty, tz = scene.ego_translation
    flow = np.zeros((2,) + cam.shape)
    fin = np.isfinite(best)
    z = best[fin]
    x, y = d[0][fin] * z, d[1][fin] * z
    z2 = z - tz
    if np.any(z2 <= 0):
        raise ValueError("ego translation moves the camera past scene geometry")
    flow[0][fin] = cam.fx * (x - tx) / z2 - cam.fx * x / z
    flow[1][fin] = cam.fy * (y - ty) / z2 - cam.fy * y / z
    return Rendering(depth, intensity, flow, hit_id, best)


def sample_lidar(gt_depth: np.ndarray, rng: np.random.Generator, row_step: int = 4,
                 dropout: float = 0.2, sigma: float = 0.02, row_phase: int = 0) -> SparseDepthMap:
    """Keep every ``row_step``-th row, drop pixels at random, add Gaussian range noise."""
    gt = np.asarray(gt_depth, dtype=np.float64)
    keep = np.zeros(gt.shape, dtype=bool)
    keep[row_phase % row_step::row_step] = True
    keep &= gt > 0
    if dropout > 0:
        keep &= rng.random(gt.shape) >= dropout
    vals = np.where(keep, gt, 0.0)
    if sigma > 0:
        noisy = vals + rng.normal(0.0, sigma, size=gt.shape)
        vals = np.where(keep, np.maximum(noisy, 1e-3), 0.0)
    return SparseDepthMap(vals)


def sample_radar(scene: Scene, rendering: Rendering, noise: SensorNoise,
                 rng: np.random.Generator) -> tuple[list[RadarReturn], list[ElevationRecord]]:
    """One return per visible box front face plus Poisson clutter.

    The azimuth is taken at a visible column of the face near the sensor axis;
    the elevation of the reflecting point is drawn within the box height and
    the elevation bound, recorded, and then dropped from the measurement.
    """
    cam = scene.camera
    v0 = horizon_row(cam)
    returns: list[RadarReturn] = []
    records: list[ElevationRecord] = []
    row = rendering.hit_id[v0]
    for i, box in enumerate(scene.boxes, start=1):
        z_front = box.center[2] - box.size[2] / 2
        cols = np.nonzero((row == i) & np.isclose(rendering.hit_depth[v0], z_front))[0]
        if cols.size == 0:
            continue
        lo_x, hi_x = box.lo[0] + 0.1 * box.size[0], box.hi[0] - 0.1 * box.size[0]
        x_near = min(max(0.0, lo_x), hi_x)
        u_near = cam.fx * x_near / z_front + cam.cx
        u = int(cols[np.argmin(np.abs(cols - u_near))])
        x = (u - cam.cx) * z_front / cam.fx
        top_above = -box.lo[1]  # height of the box top above the radar plane
        max_elev = min(math.atan2(max(top_above, 0.0), z_front), math.radians(noise.elevation_bound_deg))
        elev = float(rng.uniform(0.0, max_elev))
        true_y = -z_front * math.tan(elev)
        z_meas = z_front + (float(rng.normal(0.0, noise.radar_sigma)) if noise.radar_sigma > 0 else 0.0)
        returns.append(RadarReturn(x, max(z_meas, 0.5)))
        records.append(ElevationRecord(i, true_y, round_half_up(cam.fy * true_y / z_front + cam.cy)))
    n_clutter = int(rng.poisson(noise.clutter_rate)) if noise.clutter_rate > 0 else 0
    for _ in range(n_clutter):
        u = int(rng.integers(0, cam.width))
        z = float(rng.uniform(3.0, 70.0))
        returns.append(RadarReturn((u - cam.cx) * z / cam.fx, z))
        records.append(ElevationRecord(None, None, None))
    return returns, records


def make_sample(seed: int, noise: SensorNoise = SensorNoise(), camera: CameraIntrinsics | None = None,
                **scene_kw) -> FusionSample:
    """Scene, rendering and all simulated sensors for one seed."""
    scene = random_scene(seed, camera, **scene_kw)
    r = render_scene(scene)
    rng = np.random.default_rng([seed, 1])
    lm = sample_lidar(r.depth, rng, noise.lidar_row_step, noise.lidar_dropout, noise.lidar_sigma)
    radar, records = sample_radar(scene, r, noise, rng)
    return FusionSample(
        image=r.intensity, radar=radar, camera=scene.camera, flow=r.flow, lidar=lm,
        gt_depth=r.depth,
        meta={"seed": seed, "scene": scene, "elevation": records, "rendering": r},
    )


SPLITS = {"train": 50, "val": 10, "test": 10}


def scene_seed(base_seed: int, split: str, index: int) -> int:
    split_id = list(SPLITS).index(split)
    return int(np.random.SeedSequence([base_seed, split_id, index]).generate_state(1)[0])


def standard_dataset(seed: int = 0, noise: SensorNoise = SensorNoise(),
                     sizes: dict[str, int] | None = None) -> dict[str, list[FusionSample]]:
    """The 50/10/10 train/val/test synthetic suite."""
    sizes = sizes or SPLITS
    return {split: [make_sample(scene_seed(seed, split, i), noise) for i in range(n)]
            for split, n in sizes.items()}
