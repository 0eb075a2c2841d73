from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .geometry import CameraIntrinsics, RadarReturn
from .sparse_depth import SparseDepthMap


@dataclass
class FusionSample:
    """One camera frame with its radar returns and (training only) LiDAR map.

    ``image`` is ``(H, W)`` or ``(3, H, W)`` in [0, 1]; ``flow`` is
    ``(2, H, W)`` in pixels or ``None`` for zero flow.
    """

    image: np.ndarray
    radar: list[RadarReturn]
    camera: CameraIntrinsics
    flow: np.ndarray | None = None
    lidar: SparseDepthMap | None = None
    gt_depth: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)
