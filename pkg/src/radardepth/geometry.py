"""Pinhole projection and the vertical-uncertainty geometry of automotive radar."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def round_half_up(x):
    """Nearest integer with ties toward +inf, the one rounding rule used everywhere."""
    if np.ndim(x) == 0:
        return int(math.floor(float(x) + 0.5))
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class CameraPoint3D:
    """Point in the camera frame: x right, y down, z forward (meters)."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class RadarReturn:
    """Range/azimuth measurement; the elevation is unknown by construction."""

    x: float
    z: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"radar return must lie in front of the sensor, got z={self.z}")

    @property
    def depth(self) -> float:
        return self.z


def project_point(p: CameraPoint3D, cam: CameraIntrinsics) -> tuple[int, int] | None:
    """Project a camera-frame point to integer pixel ``(u, v)``.

    Returns ``None`` when the pixel falls outside the image. Raises
    ``ValueError`` for points at or behind the camera plane.
    """
    if not p.z > 0:
        raise ValueError(f"point behind camera (z={p.z})")
    u = round_half_up(cam.fx * p.x / p.z + cam.cx)
    v = round_half_up(cam.fy * p.y / p.z + cam.cy)
    if 0 <= u < cam.width and 0 <= v < cam.height:
        return u, v
    return None


def project_points(xyz: np.ndarray, cam: CameraIntrinsics):
    """Vectorised :func:`project_point` for an ``(N, 3)`` array.

    Returns ``(u, v, valid)``; ``valid`` is False for out-of-frame points.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    z = xyz[:, 2]
    if np.any(z <= 0):
        raise ValueError("point behind camera (z <= 0)")
    u = round_half_up(cam.fx * xyz[:, 0] / z + cam.cx)
    v = round_half_up(cam.fy * xyz[:, 1] / z + cam.cy)
    valid = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return u, v, valid


def horizon_row(cam: CameraIntrinsics, row_offset: int = 0) -> int:
    """Image row of the radar's horizontal plane (radar at camera height by default)."""
    return round_half_up(cam.cy) + int(row_offset)


def project_radar_horizontal(
    r: RadarReturn, cam: CameraIntrinsics, row_offset: int = 0
) -> tuple[int, int] | None:
    """RM pixel of a return under the horizontal-direction assumption.

    ``None`` flags a return whose column (or shifted row) is out of frame.
    """
    if not r.z > 0:
        raise ValueError(f"radar return behind sensor (z={r.z})")
    u = round_half_up(cam.fx * r.x / r.z + cam.cx)
    v0 = horizon_row(cam, row_offset)
    if 0 <= u < cam.width and 0 <= v0 < cam.height:
        return u, v0
    return None


def compute_expansion_pixels(
    cam: CameraIntrinsics, theta_deg: float | None = None, override: int | None = None
) -> int:
    """Number of rows V a radar return is expanded upward.

    An explicit ``override`` wins (the usual case); otherwise
    ``V = min(height, ceil(fy * tan(theta)))`` for a one-sided elevation bound.
    """
    if override is not None:
        if int(override) < 1:
            raise ValueError(f"V must be >= 1, got {override}")
        return int(override)
    if theta_deg is None or not 0 < theta_deg < 90:
        raise ValueError(f"theta_deg must lie in (0, 90), got {theta_deg}")
    # guard against fy*tan landing a hair above an integer from float noise
    raw = cam.fy * math.tan(math.radians(theta_deg))
    return min(cam.height, max(1, math.ceil(raw - 1e-9)))
