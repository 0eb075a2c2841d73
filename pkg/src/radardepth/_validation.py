"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

from typing import Iterable

import numpy as np


def check_intensity_image(image, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Return a 2-D float64 grayscale image in [0, 1].

    3-channel input (channel-first or channel-last) is averaged.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] in (1, 3):
            img = img.mean(axis=0)
        elif img.shape[2] in (1, 3):
            img = img.mean(axis=2)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D intensity image, got shape {np.shape(image)}")
    if shape is not None and img.shape != tuple(shape):
        raise ValueError(f"image shape {img.shape} does not match depth map shape {tuple(shape)}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def check_samples(samples: Iterable, require_lidar: bool) -> list:
    """Materialise ``samples`` and check each one is usable."""
    out = list(samples)
    if not out:
        raise ValueError("no samples given")
    for i, s in enumerate(out):
        for attr in ("image", "radar", "camera"):
            if not hasattr(s, attr):
                raise TypeError(f"sample {i} lacks attribute {attr!r}")
        if require_lidar and getattr(s, "lidar", None) is None:
            raise ValueError(f"sample {i} has no LiDAR map; training needs one")
        h, w = s.camera.shape
        img = np.asarray(s.image)
        if img.shape[-2:] != (h, w):
            raise ValueError(f"sample {i}: image {img.shape} does not match camera {(h, w)}")
    return out


def check_probability(name: str, value: float, closed: bool = False) -> float:
    value = float(value)
    ok = 0.0 <= value <= 1.0 if closed else 0.0 < value < 1.0
    if not ok:
        interval = "[0, 1]" if closed else "(0, 1)"
        raise ValueError(f"{name} must lie in {interval}, got {value}")
    return value
