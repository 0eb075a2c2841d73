import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from radardepth.config import RunConfig
from radardepth.data import FusionSample
from radardepth.geometry import RadarReturn
from radardepth.pipeline import (
    LateFusionDepthEstimator,
    NoSupervisionError,
    accept_entries,
    feature_band,
    infer_em,
    train,
)
from radardepth.sparse_depth import ErmEntry, MatchThresholds, SparseDepthMap, build_erm, select_pcrm
from radardepth.synth import NOISE_PROFILES, default_camera, make_sample


def _entry(i, x, y, d):
    return ErmEntry(i, x, y, d, i)


def test_accept_nothing_above_tau():
    entries = [_entry(1, 3, 4, 10.0), _entry(2, 3, 3, 10.0)]
    em = accept_entries(entries, np.array([0.2, 0.5]), 0.5, (8, 8))
    assert em.em.count() == 0


def test_accept_single_entry():
    entries = [_entry(1, 3, 4, 12.5), _entry(2, 3, 3, 12.5)]
    res = accept_entries(entries, np.array([0.9, 0.1]), 0.5, (8, 8))
    assert res.em.pixels() == {(3, 4)}
    assert res.em.values[4, 3] == 12.5
    assert res.probability[4, 3] == 0.9


def test_collision_higher_probability_then_smaller_depth():
    entries = [_entry(1, 2, 2, 10.0), _entry(2, 2, 2, 20.0), _entry(3, 5, 5, 30.0), _entry(4, 5, 5, 8.0)]
    res = accept_entries(entries, np.array([0.6, 0.8, 0.7, 0.7]), 0.5, (8, 8))
    assert res.em.values[2, 2] == 20.0
    assert res.em.values[5, 5] == 8.0


def test_accept_empty_entry_list():
    assert accept_entries([], np.zeros(0), 0.5, (4, 4)).em.count() == 0


def test_feature_band_default_camera():
    top, bottom = feature_band(default_camera(), 60)
    assert (top, bottom) == (20, 116)
    assert feature_band(default_camera(), 60, margin=None) == (0, 192)


def _oracle(thresholds=MatchThresholds()):
    def score(sample, entries):
        labels, _ = select_pcrm(entries, sample.lidar, thresholds)
        return np.array([1.0 if e.index in labels.positives else 0.0 for e in entries])
    return score


@pytest.mark.parametrize("seed", range(5))
def test_oracle_scorer_reproduces_pcrm(seed):
    s = make_sample(seed)
    _, entries = build_erm(s.radar, s.camera, 60)
    _, pcrm = select_pcrm(entries, s.lidar, MatchThresholds())
    em = infer_em(s, scorer=_oracle(), tau=0.5)
    assert em.em.pixels() == pcrm.pixels()
    np.testing.assert_array_equal(em.em.values, pcrm.values)


def _random_scorer(seed):
    def score(sample, entries):
        return np.random.default_rng(seed).random(len(entries))
    return score


@pytest.mark.parametrize("seed", range(3))
def test_em_properties_under_random_scores(seed):
    s = make_sample(100 + seed)
    erm, entries = build_erm(s.radar, s.camera, 60)
    by_pixel = {}
    for e in entries:
        by_pixel.setdefault((e.x, e.y), set()).add(e.depth)
    prev = None
    for tau in np.linspace(0, 0.9, 10):
        em = infer_em(s, scorer=_random_scorer(seed), tau=tau).em
        px = em.pixels()
        for x, y in px:
            assert em.values[y, x] in by_pixel[(x, y)]
        if prev is not None:
            assert px <= prev
        prev = px
    assert infer_em(s, scorer=_random_scorer(seed), tau=0.0).em.pixels() == erm.pixels()


def _tiny_set(small_cam, n, start=0):
    return [make_sample(start + i, camera=small_cam) for i in range(n)]


def test_zero_labeled_dataset_aborts(small_cam):
    s = make_sample(0, camera=small_cam)
    blind = FusionSample(s.image, s.radar, s.camera, s.flow, SparseDepthMap.empty(small_cam.width, small_cam.height))
    est = LateFusionDepthEstimator(v=24, epochs=1)
    with pytest.raises(NoSupervisionError, match="zero labeled"):
        est.fit([blind, blind])


def test_skipped_images_are_counted(small_cam):
    s = make_sample(0, camera=small_cam)
    blind = FusionSample(s.image, [RadarReturn(0.0, 30.0)], s.camera, s.flow,
                         SparseDepthMap.empty(small_cam.width, small_cam.height))
    est = LateFusionDepthEstimator(v=24, epochs=2, lr=1e-3).fit([s, blind])
    assert [r["skipped"] for r in est.history_] == [1, 1]


def test_fit_requires_lidar(small_cam):
    s = make_sample(0, camera=small_cam)
    with pytest.raises(ValueError, match="LiDAR"):
        LateFusionDepthEstimator(v=24).fit([FusionSample(s.image, s.radar, s.camera, s.flow)])


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        LateFusionDepthEstimator().predict_one(make_sample(0))


def test_sklearn_params_roundtrip():
    est = LateFusionDepthEstimator(tau=0.3, lr=1e-3, invert_class_weights=True)
    params = est.get_params()
    assert params["tau"] == 0.3 and params["invert_class_weights"] is True
    assert clone(est).get_params() == params
    cfg = RunConfig(tau=0.4, epochs=2, seed=9)
    est2 = LateFusionDepthEstimator.from_config(cfg)
    assert (est2.tau, est2.epochs, est2.seed, est2.lr) == (0.4, 2, 9, 5e-5)


def test_one_image_overfit(small_cam):
    """500 steps on one image drive the loss under 5% of its starting value."""
    s = make_sample(3, camera=small_cam, noise=NOISE_PROFILES["clean"])
    est = LateFusionDepthEstimator(v=24, epochs=500, lr=1e-3, band_margin=None).fit([s])
    assert est.loss_curve_[-1] < 0.05 * est.loss_curve_[0], (est.loss_curve_[0], est.loss_curve_[-1])


def test_training_is_deterministic(small_cam):
    data = _tiny_set(small_cam, 3)
    a = LateFusionDepthEstimator(v=24, epochs=2, lr=1e-3, seed=5).fit(data)
    b = LateFusionDepthEstimator(v=24, epochs=2, lr=1e-3, seed=5).fit(data)
    assert a.loss_curve_ == b.loss_curve_
    for (ka, va), (kb, vb) in zip(a._params().items(), b._params().items()):
        assert ka == kb and va.tobytes() == vb.tobytes()
    pa, pb = a.predict_one(data[0]), b.predict_one(data[0])
    assert pa.em.values.tobytes() == pb.em.values.tobytes()


def test_train_helper_and_tau_one_is_empty(small_cam):
    data = _tiny_set(small_cam, 2)
    est = train(data, RunConfig(v=24, epochs=1, lr=1e-3), val=_tiny_set(small_cam, 2, start=50))
    assert len(est.history_) == 1 and "val_auc" in est.history_[0]
    assert est.predict_one(data[0], tau=1.0).em.count() == 0
    entries, probs = est.entry_probabilities(data[0])
    assert len(entries) == len(probs) and np.all((probs > 0) & (probs < 1))


def test_loss_decreases_on_standard_set(trained_grid):
    for key, est in trained_grid.items():
        curve = est.loss_curve_
        assert len(curve) == 10 and curve[-1] < curve[0], (key, curve)
