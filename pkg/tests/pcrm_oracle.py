"""Brute-force reference for ERM labeling, written without the library's helpers."""
import math

import numpy as np

from radardepth.geometry import CameraIntrinsics, RadarReturn
from radardepth.sparse_depth import MatchThresholds, SparseDepthMap


def brute_force_labels(returns, lm_values, fx, cx, cy, width, height, v, t_abs, t_rel):
    """Walk every (return, vertical offset) pair.

    Returns ``(positives, negatives, unlabeled, pcrm)`` where the label sets
    hold ``(source, row)`` pairs and ``pcrm`` maps ``(x, y)`` to depth.
    """
    pos, neg, unl, pcrm = set(), set(), set(), {}
    v0 = math.floor(cy + 0.5)
    for src, (x, z) in enumerate(returns, start=1):
        u = math.floor(fx * x / z + cx + 0.5)
        if not (0 <= u < width and 0 <= v0 < height):
            continue
        for k in range(v):
            row = v0 - k
            if row < 0:
                break
            dl = float(lm_values[row][u])
            if dl <= 0:
                unl.add((src, row))
                continue
            diff = abs(dl - z)
            if diff < t_abs and diff / dl < t_rel:
                pos.add((src, row))
                pcrm[(u, row)] = min(pcrm.get((u, row), math.inf), z)
            else:
                neg.add((src, row))
    return pos, neg, unl, pcrm


def random_instance(rng):
    """Random camera, returns, LM, expansion height and thresholds."""
    w, h = int(rng.integers(8, 40)), int(rng.integers(8, 40))
    cam = CameraIntrinsics(float(rng.uniform(5, 60)), float(rng.uniform(5, 60)),
                           float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)), w, h)
    n = int(rng.integers(0, 8))
    returns = [RadarReturn(float(rng.uniform(-20, 20)), float(rng.uniform(1, 60))) for _ in range(n)]
    lm = np.zeros((h, w))
    cover = rng.random((h, w)) < rng.uniform(0.1, 0.9)
    lm[cover] = rng.uniform(1, 60, size=cover.sum())
    # plant near-matches so both classes occur
    for r in returns:
        col = int(np.floor(cam.fx * r.x / r.z + cam.cx + 0.5))
        if 0 <= col < w:
            rows = rng.random(h) < 0.4
            lm[rows, col] = r.z + rng.normal(0, 0.3, size=rows.sum())
    lm = np.where(lm > 0, lm, 0)
    v = int(rng.integers(1, h + 3))
    if rng.random() < 0.3:
        th = MatchThresholds(1.0, 0.01)
    else:
        th = MatchThresholds(float(rng.uniform(0.05, 3)), float(rng.uniform(0.001, 0.5)))
    return cam, returns, SparseDepthMap(lm), v, th
