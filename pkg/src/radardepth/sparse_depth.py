"""Sparse depth maps (RM, LM, ERM, PCRM, EM), upward radar expansion and
LiDAR-supervised selection of possibly-correct radar directions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import CameraIntrinsics, RadarReturn, project_radar_horizontal

logger = logging.getLogger(__name__)

#: value stored in pixels without a measurement
NO_DEPTH = 0.0


@dataclass
class SparseDepthMap:
    """``height x width`` depth grid in meters; non-positive means "no measurement"."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {v.shape}")
        v = np.where(np.isfinite(v) & (v > 0), v, NO_DEPTH)
        self.values = v

    @classmethod
    def empty(cls, width: int, height: int) -> "SparseDepthMap":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mask(self) -> np.ndarray:
        return self.values > 0

    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def pixels(self) -> set[tuple[int, int]]:
        """Measured pixels as a set of ``(x, y)``."""
        ys, xs = np.nonzero(self.mask)
        return set(zip(xs.tolist(), ys.tolist()))

    def check_camera(self, cam: CameraIntrinsics) -> None:
        if self.shape != cam.shape:
            raise ValueError(f"depth map {self.shape} does not match camera {cam.shape}")

    def write_min(self, xs, ys, depths) -> None:
        """Scatter depths, keeping the smaller value where pixels collide."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        d = np.asarray(depths, dtype=np.float64)
        buf = np.where(self.mask, self.values, np.inf)
        np.minimum.at(buf, (ys, xs), d)
        self.values = np.where(np.isfinite(buf), buf, NO_DEPTH)


class ErmEntry(NamedTuple):
    """One expanded radar point ``p_erm(e)``; ``index`` counts from 1."""

    index: int
    x: int
    y: int
    depth: float
    source: int  # 1-based radar return index


@dataclass(frozen=True)
class MatchThresholds:
    t_abs: float = 1.0
    t_rel: float = 0.01

    def __post_init__(self):
        if not self.t_abs > 0:
            raise ValueError(f"t_abs must be > 0, got {self.t_abs}")
        if not 0 < self.t_rel < 1:
            raise ValueError(f"t_rel must lie in (0, 1), got {self.t_rel}")


@dataclass
class LabelSets:
    positives: set[int] = field(default_factory=set)
    negatives: set[int] = field(default_factory=set)
    unlabeled: set[int] = field(default_factory=set)

    @property
    def n_pos(self) -> int:
        return len(self.positives)

    @property
    def n_neg(self) -> int:
        return len(self.negatives)


def entry_arrays(entries: Sequence[ErmEntry]):
    """Column arrays ``(index, x, y, depth, source)`` for vectorised work."""
    if len(entries) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z, np.zeros(0), z
    a = np.array(entries, dtype=np.float64)
    return (a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2].astype(np.int64),
            a[:, 3], a[:, 4].astype(np.int64))


def build_rm(
    returns: Sequence[RadarReturn], cam: CameraIntrinsics, row_offset: int = 0
) -> SparseDepthMap:
    """Radar map: each return at its horizontal-projection pixel, nearest wins."""
    rm = SparseDepthMap.empty(cam.width, cam.height)
    xs, ys, ds = [], [], []
    dropped = 0
    for r in returns:
        px = project_radar_horizontal(r, cam, row_offset)
        if px is None:
            dropped += 1
            continue
        xs.append(px[0])
        ys.append(px[1])
        ds.append(r.depth)
    if dropped:
        logger.debug("dropped %d unprojectable radar returns", dropped)
    if xs:
        rm.write_min(xs, ys, ds)
    return rm


def build_erm(
    returns: Sequence[RadarReturn], cam: CameraIntrinsics, v: int, row_offset: int = 0
) -> tuple[SparseDepthMap, list[ErmEntry]]:
    """Expand every projectable return upward over ``v`` rows (offset 0 included).

    Rows above the image top are clipped. Collisions keep the smaller depth in
    the map, but every entry is kept in the entry list.
    """
    if v < 1:
        raise ValueError(f"expansion height must be >= 1, got {v}")
    entries: list[ErmEntry] = []
    e = 1
    for src, r in enumerate(returns, start=1):
        px = project_radar_horizontal(r, cam, row_offset)
        if px is None:
            continue
        u, v0 = px
        for k in range(v):
            row = v0 - k
            if row < 0:
                break
            entries.append(ErmEntry(e, u, row, float(r.depth), src))
            e += 1
    erm = SparseDepthMap.empty(cam.width, cam.height)
    if entries:
        _, xs, ys, ds, _ = entry_arrays(entries)
        erm.write_min(xs, ys, ds)
    return erm, entries


def select_pcrm(
    erm_entries: Sequence[ErmEntry],
    lm: SparseDepthMap,
    th: MatchThresholds = MatchThresholds(),
    include_uncovered: bool = False,
) -> tuple[LabelSets, SparseDepthMap]:
    """Label ERM entries against LiDAR and build the PCRM.

    An entry is positive iff ``|d_l - d_r| < t_abs`` and
    ``|d_l - d_r| / d_l < t_rel``; otherwise negative. Entries on pixels
    without LiDAR are unlabeled, or negative when ``include_uncovered``.
    """
    labels = LabelSets()
    pcrm = SparseDepthMap.empty(lm.width, lm.height)
    if len(erm_entries) == 0:
        return labels, pcrm
    idx, xs, ys, dr, _ = entry_arrays(erm_entries)
    if xs.max() >= lm.width or ys.max() >= lm.height or xs.min() < 0 or ys.min() < 0:
        raise ValueError("ERM entry outside the LiDAR map")
    dl = lm.values[ys, xs]
    covered = dl > 0
    diff = np.abs(dl - dr)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = covered & (diff < th.t_abs) & (diff / np.where(covered, dl, 1.0) < th.t_rel)
    neg = covered & ~pos
    unl = ~covered
    if include_uncovered:
        neg = neg | unl
        unl = np.zeros_like(unl)
    labels.positives = set(idx[pos].tolist())
    labels.negatives = set(idx[neg].tolist())
    labels.unlabeled = set(idx[unl].tolist())
    if pos.any():
        pcrm.write_min(xs[pos], ys[pos], dr[pos])
    return labels, pcrm


def label_vector(entries: Sequence[ErmEntry], labels: LabelSets) -> np.ndarray:
    """Per-entry target: 1 positive, 0 negative, -1 unlabeled."""
    out = np.full(len(entries), -1, dtype=np.int8)
    for i, ent in enumerate(entries):
        if ent.index in labels.positives:
            out[i] = 1
        elif ent.index in labels.negatives:
            out[i] = 0
    return out
