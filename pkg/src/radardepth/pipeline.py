"""Training and inference of the late-fusion radar depth estimator.

Training, per image: expand radar returns into the ERM, label entries
against LiDAR, extract image features, score ``[F(p), s]`` for labeled
entries, apply the class-weighted BCE, and backpropagate through both
networks. Inference scores every ERM entry and keeps those above ``tau``.
"""
from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.metrics import roc_auc_score
from threadpoolctl import threadpool_limits

from ._validation import check_probability, check_samples
from .config import RunConfig
from .data import FusionSample
from .evaluator import ConsistencyEvaluator, class_weights, weighted_bce_loss
from .features import ExtractorInput, FeatureExtractor, make_coord_map
from .geometry import CameraIntrinsics, horizon_row
from .nn import AdamState, adam_step, sigmoid
from .sparse_depth import (
    ErmEntry,
    LabelSets,
    MatchThresholds,
    SparseDepthMap,
    build_erm,
    entry_arrays,
    label_vector,
    select_pcrm,
)

logger = logging.getLogger(__name__)

Scorer = Callable[[FusionSample, list[ErmEntry]], np.ndarray]


class NoSupervisionError(RuntimeError):
    pass


@dataclass
class EstimatedMap:
    em: SparseDepthMap
    probability: np.ndarray  # (H, W) probability of the accepted entry, 0 elsewhere


@dataclass
class _Prepared:
    sample: FusionSample
    entries: list[ErmEntry]
    labels: LabelSets
    x: np.ndarray  # network input restricted to the feature band
    top: int
    ys: np.ndarray
    xs: np.ndarray
    depths: np.ndarray
    y: np.ndarray  # 1 / 0 / -1 per entry


def feature_band(cam: CameraIntrinsics, v: int, row_offset: int = 0, margin: int | None = 16,
                 factor: int = 4) -> tuple[int, int]:
    """Rows ``[top, bottom)`` the extractor runs on.

    The band covers the expansion window plus ``margin`` rows of context and
    is aligned to the network's downsampling ``factor``. ``margin=None`` uses
    the whole image.
    """
    if cam.height % factor or cam.width % factor:
        raise ValueError(f"image size {cam.shape} must be divisible by {factor}")
    if margin is None:
        return 0, cam.height
    v0 = horizon_row(cam, row_offset)
    top = max(0, v0 - v + 1 - margin) // factor * factor
    bottom = min(cam.height, -(-(v0 + 1 + margin) // factor) * factor)
    return top, bottom


def accept_entries(entries: Sequence[ErmEntry], probs: np.ndarray, tau: float,
                   shape: tuple[int, int]) -> EstimatedMap:
    """Write entries with ``p > tau`` into a map.

    On shared pixels the higher probability wins, ties go to the smaller depth.
    """
    em = np.zeros(shape)
    pmap = np.zeros(shape)
    if len(entries) == 0:
        return EstimatedMap(SparseDepthMap(em), pmap)
    _, xs, ys, ds, _ = entry_arrays(entries)
    probs = np.asarray(probs, dtype=np.float64)
    keep = probs > tau
    xs, ys, ds, probs = xs[keep], ys[keep], ds[keep], probs[keep]
    order = np.lexsort((ds, -probs))
    lin = (ys * shape[1] + xs)[order]
    _, first = np.unique(lin, return_index=True)
    pick = order[first]
    em[ys[pick], xs[pick]] = ds[pick]
    pmap[ys[pick], xs[pick]] = probs[pick]
    return EstimatedMap(SparseDepthMap(em), pmap)


class LateFusionDepthEstimator(BaseEstimator):
    """Sparse depth from image + elevation-blind radar, trained with LiDAR.

    ``fit`` takes :class:`FusionSample` objects carrying a LiDAR map;
    ``predict`` returns one :class:`EstimatedMap` per sample.
    """

    def __init__(self, t_abs=1.0, t_rel=0.01, v=60, tau=0.5, lr=5e-5, epochs=10, seed=0,
                 d_max=80.0, invert_class_weights=False, negatives_include_uncovered=False,
                 deterministic=True, feature_channels=32, hidden=(64, 64), row_offset=0,
                 band_margin=16, verbose=0):
        self.t_abs = t_abs
        self.t_rel = t_rel
        self.v = v
        self.tau = tau
        self.lr = lr
        self.epochs = epochs
        self.seed = seed
        self.d_max = d_max
        self.invert_class_weights = invert_class_weights
        self.negatives_include_uncovered = negatives_include_uncovered
        self.deterministic = deterministic
        self.feature_channels = feature_channels
        self.hidden = hidden
        self.row_offset = row_offset
        self.band_margin = band_margin
        self.verbose = verbose

    @classmethod
    def from_config(cls, cfg: RunConfig, **kwargs) -> "LateFusionDepthEstimator":
        return cls(**cfg.as_dict(), **kwargs)

    # -- helpers ---------------------------------------------------------

    def _threads(self):
        return threadpool_limits(1) if self.deterministic else contextlib.nullcontext()

    def _check_fitted(self):
        if not hasattr(self, "extractor_"):
            raise NotFittedError("estimator is not fitted; call fit() or load a checkpoint")

    def _prepare(self, sample: FusionSample, with_labels: bool) -> _Prepared:
        cam = sample.camera
        _, entries = build_erm(sample.radar, cam, self.v, self.row_offset)
        if with_labels:
            labels, _ = select_pcrm(entries, sample.lidar, MatchThresholds(self.t_abs, self.t_rel),
                                    include_uncovered=self.negatives_include_uncovered)
            y = label_vector(entries, labels)
        else:
            labels, y = LabelSets(), np.full(len(entries), -1, dtype=np.int8)
        top, bottom = feature_band(cam, self.v, self.row_offset, self.band_margin)
        inp = ExtractorInput(sample.image, sample.flow, make_coord_map(cam.width, cam.height))
        x = inp.stack()[:, top:bottom]
        _, xs, ys, ds, _ = entry_arrays(entries)
        return _Prepared(sample, entries, labels, x, top, ys - top, xs, ds, y)

    def _init_networks(self, in_channels: int):
        dtype = np.float32
        self.extractor_ = FeatureExtractor(in_channels, self.feature_channels, seed=self.seed, dtype=dtype)
        self.evaluator_ = ConsistencyEvaluator(self.feature_channels, tuple(self.hidden), self.d_max,
                                               seed=self.seed + 1, dtype=dtype)

    def _params(self) -> dict[str, np.ndarray]:
        out = {f"extractor.{k}": v for k, v in self.extractor_.params.items()}
        out.update({f"evaluator.{k}": v for k, v in self.evaluator_.params.items()})
        return out

    def _grads(self) -> dict[str, np.ndarray]:
        out = {f"extractor.{k}": v for k, v in self.extractor_.grads.items()}
        out.update({f"evaluator.{k}": v for k, v in self.evaluator_.grads.items()})
        return out

    def _score(self, prep: _Prepared, training: bool = False):
        """Forward pass; returns (features, evaluator rows, logits)."""
        feats = self.extractor_.forward(prep.x, training=training)
        v = feats[:, prep.ys, prep.xs].T
        rows = self.evaluator_.make_input(v, prep.depths)
        return feats, rows, self.evaluator_.logits(rows)

    def _train_step(self, prep: _Prepared) -> float:
        sel = prep.y >= 0
        n_pos = int(np.sum(prep.y == 1))
        n_neg = int(np.sum(prep.y == 0))
        w_pos, w_neg = class_weights(n_pos, n_neg, self.invert_class_weights)
        sub = _Prepared(prep.sample, prep.entries, prep.labels, prep.x, prep.top,
                        prep.ys[sel], prep.xs[sel], prep.depths[sel], prep.y[sel])
        feats, _, logits = self._score(sub, training=True)
        p = sigmoid(logits.astype(np.float64))
        y = sub.y.astype(np.float64)
        w = np.where(y == 1, w_pos, w_neg)
        loss, dlogits = weighted_bce_loss(p, y, w)
        drows = self.evaluator_.backward(dlogits)
        c, h, wd = feats.shape
        dflat = np.zeros((h * wd, c), dtype=feats.dtype)
        np.add.at(dflat, sub.ys * wd + sub.xs, drows[:, :c])
        self.extractor_.backward(np.ascontiguousarray(dflat.T).reshape(c, h, wd))
        adam_step(self._params(), self._grads(), self.optimizer_)
        return loss

    # -- public API ------------------------------------------------------

    def fit(self, X: Sequence[FusionSample], y=None, X_val: Sequence[FusionSample] | None = None):
        samples = check_samples(X, require_lidar=True)
        MatchThresholds(self.t_abs, self.t_rel)
        check_probability("tau", self.tau, closed=True)
        with self._threads():
            prepared = [self._prepare(s, with_labels=True) for s in samples]
            val = [self._prepare(s, with_labels=True) for s in check_samples(X_val, True)] if X_val else []
            self._init_networks(prepared[0].x.shape[0])
            self.optimizer_ = AdamState(lr=self.lr)
            rng = np.random.default_rng(self.seed)
            self.history_ = []
            for epoch in range(1, self.epochs + 1):
                losses, skipped = [], 0
                for i in rng.permutation(len(prepared)):
                    prep = prepared[i]
                    if not np.any(prep.y >= 0):
                        skipped += 1
                        continue
                    losses.append(self._train_step(prep))
                if not losses:
                    raise NoSupervisionError(
                        f"epoch {epoch}: all {skipped} images have zero labeled ERM entries")
                record = {"epoch": epoch, "loss": float(np.mean(losses)), "skipped": skipped,
                          "val_auc": self._auc(val) if val else None}
                self.history_.append(record)
                logger.info("epoch %d loss %.5f val_auc %s", epoch, record["loss"], record["val_auc"])
                if self.verbose:
                    print(record)
        self.loss_curve_ = [r["loss"] for r in self.history_]
        return self

    def _auc(self, prepared: Sequence[_Prepared]) -> float | None:
        ys, ps = [], []
        for prep in prepared:
            sel = prep.y >= 0
            if not sel.any():
                continue
            _, _, logits = self._score(prep)
            ys.append(prep.y[sel])
            ps.append(logits[sel])
        if not ys:
            return None
        ys, ps = np.concatenate(ys), np.concatenate(ps)
        if len(np.unique(ys)) < 2:
            return None
        return float(roc_auc_score(ys, ps))

    def entry_probabilities(self, sample: FusionSample) -> tuple[list[ErmEntry], np.ndarray]:
        """Consistency probability for every ERM entry of ``sample``."""
        self._check_fitted()
        with self._threads():
            prep = self._prepare(sample, with_labels=False)
            if not prep.entries:
                return prep.entries, np.zeros(0)
            _, _, logits = self._score(prep)
        p = sigmoid(logits.astype(np.float64))
        return prep.entries, np.clip(p, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))

    def predict_one(self, sample: FusionSample, tau: float | None = None) -> EstimatedMap:
        tau = self.tau if tau is None else tau
        entries, probs = self.entry_probabilities(sample)
        return accept_entries(entries, probs, tau, sample.camera.shape)

    def predict(self, X: Sequence[FusionSample], tau: float | None = None) -> list[EstimatedMap]:
        return [self.predict_one(s, tau) for s in check_samples(X, require_lidar=False)]

    def score_auc(self, X: Sequence[FusionSample]) -> float | None:
        """ROC AUC of the evaluator on the labeled entries of ``X``."""
        self._check_fitted()
        with self._threads():
            return self._auc([self._prepare(s, with_labels=True) for s in check_samples(X, True)])


def train(dataset: Sequence[FusionSample], config: RunConfig,
          val: Sequence[FusionSample] | None = None, **kwargs) -> LateFusionDepthEstimator:
    """Fit an estimator from a :class:`RunConfig`; the loss curve is ``est.loss_curve_``."""
    return LateFusionDepthEstimator.from_config(config, **kwargs).fit(dataset, X_val=val)


def infer_em(sample: FusionSample, estimator: LateFusionDepthEstimator | None = None,
             tau: float | None = None, scorer: Scorer | None = None, v: int | None = None,
             row_offset: int = 0) -> EstimatedMap:
    """EM for one sample.

    ``scorer`` replaces the trained evaluator (e.g. with a label oracle); it
    receives the sample and its ERM entries and returns one probability each.
    """
    if scorer is None:
        if estimator is None:
            raise ValueError("need a fitted estimator or a scorer")
        return estimator.predict_one(sample, tau)
    v = v if v is not None else (estimator.v if estimator is not None else 60)
    tau = tau if tau is not None else (estimator.tau if estimator is not None else 0.5)
    _, entries = build_erm(sample.radar, sample.camera, v, row_offset)
    probs = np.asarray(scorer(sample, entries), dtype=np.float64)
    return accept_entries(entries, probs, tau, sample.camera.shape)
