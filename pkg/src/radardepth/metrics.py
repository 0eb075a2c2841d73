from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .sparse_depth import SparseDepthMap


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rel: float
    rmse: float
    evaluated_pixel_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate_depth(pred: np.ndarray, lm: SparseDepthMap) -> MetricsReport:
    """MAE, REL and RMSE of a dense prediction over LiDAR-measured pixels only."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != lm.shape:
        raise ValueError(f"prediction {pred.shape} and LiDAR map {lm.shape} differ in shape")
    mask = lm.mask
    n = int(mask.sum())
    if n == 0:
        raise ValueError("LiDAR map has no measured pixels")
    gt = lm.values[mask]
    err = pred[mask] - gt
    ae = np.abs(err)
    # fsum keeps the reduction order-independent
    mae = math.fsum(ae.tolist()) / n
    rel = math.fsum((ae / gt).tolist()) / n
    rmse = math.sqrt(math.fsum((err * err).tolist()) / n)
    return MetricsReport(mae, rel, rmse, n)
