import math

import numpy as np
import pytest

from radardepth.evaluator import ConsistencyEvaluator, class_weights, weighted_bce_loss
from radardepth.nn import AdamState, ShapeError, adam_step, numeric_grad, relative_error, sigmoid


def test_untrained_outputs_half():
    ev = ConsistencyEvaluator(8, d_max=80)
    rng = np.random.default_rng(0)
    rows = ev.make_input(rng.standard_normal((20, 8)), rng.uniform(1, 80, 20))
    np.testing.assert_array_equal(ev.evaluate(rows), 0.5)


def test_probabilities_strictly_inside_unit_interval():
    ev = ConsistencyEvaluator(4, dtype=np.float64)
    rng = np.random.default_rng(1)
    for p in ev.net.named_params().values():
        p[...] = rng.standard_normal(p.shape)
    p = ev.evaluate(ev.make_input(rng.standard_normal((100, 4)), rng.uniform(0, 200, 100)))
    assert np.all((p > 0) & (p < 1))


def test_depth_normalisation():
    ev = ConsistencyEvaluator(2, d_max=80)
    rows = ev.make_input(np.zeros((3, 2)), [40.0, 160.0, 0.0])
    np.testing.assert_allclose(rows[:, -1], [0.5, 1.0, 0.0])


def test_channel_mismatch_rejected():
    ev = ConsistencyEvaluator(8)
    with pytest.raises(ShapeError):
        ev.make_input(np.zeros((3, 7)), np.ones(3))
    with pytest.raises(ShapeError):
        ev.evaluate(np.zeros((3, 8), np.float32))


@pytest.mark.parametrize("n_pos, n_neg, invert, expected", [
    (10, 90, False, (0.1, 0.9)),
    (7, 7, False, (0.5, 0.5)),
    (10, 90, True, (0.9, 0.1)),
])
def test_class_weights(n_pos, n_neg, invert, expected):
    assert class_weights(n_pos, n_neg, invert) == pytest.approx(expected, abs=1e-15)


def test_class_weights_need_labels():
    with pytest.raises(ValueError):
        class_weights(0, 0)


def test_ln2_case():
    loss, g = weighted_bce_loss(np.array([0.5]), np.array([1.0]), np.array([1.0]))
    assert abs(loss - math.log(2)) < 1e-12
    assert g[0] == pytest.approx(-0.5)


def test_perfect_predictions_near_zero():
    p = np.array([1.0, 0.0, 1.0])
    y = np.array([1.0, 0.0, 1.0])
    w = np.array([0.3, 0.7, 0.3])
    loss, _ = weighted_bce_loss(p, y, w)
    assert 0 <= loss <= np.sum(w) * math.log(1 / (1 - 1e-7)) + 1e-15


def test_logit_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 50))
        z = rng.standard_normal(n) * 3
        y = (rng.random(n) < 0.4).astype(float)
        w = rng.uniform(0.05, 1, n)
        _, g = weighted_bce_loss(sigmoid(z), y, w)
        num = numeric_grad(lambda: weighted_bce_loss(sigmoid(z), y, w)[0], z, np.arange(n), 1e-4)
        assert relative_error(g, num) < 1e-6


def test_loss_properties():
    rng = np.random.default_rng(3)
    p = rng.uniform(0.01, 0.99, 30)
    y = (rng.random(30) < 0.5).astype(float)
    w = rng.uniform(0.1, 1, 30)
    loss, g = weighted_bce_loss(p, y, w)
    assert loss >= 0
    assert np.all(g[y == 1] < 0) and np.all(g[y == 0] > 0)
    perm = rng.permutation(30)
    assert weighted_bce_loss(p[perm], y[perm], w[perm])[0] == pytest.approx(loss, rel=1e-14)
    i = int(np.nonzero(y == 1)[0][0])
    lower = p.copy()
    lower[i] *= 0.5
    assert weighted_bce_loss(lower, y, w)[0] > loss


def test_backprop_through_mlp_fd():
    rng = np.random.default_rng(4)
    ev = ConsistencyEvaluator(5, hidden=(7, 6), dtype=np.float64, seed=3)
    for p in ev.net.named_params().values():
        p[...] = rng.standard_normal(p.shape) * 0.5
    rows = ev.make_input(rng.standard_normal((12, 5)), rng.uniform(1, 80, 12)).astype(np.float64)
    y = (rng.random(12) < 0.5).astype(float)
    w = np.where(y == 1, 0.3, 0.7)

    def loss():
        return weighted_bce_loss(ev.evaluate(rows), y, w)[0]

    _, dz = weighted_bce_loss(ev.evaluate(rows), y, w)
    drows = ev.backward(dz)
    grads = {k: v.copy() for k, v in ev.grads.items()}
    for name, p in ev.params.items():
        num = numeric_grad(loss, p, np.arange(p.size))
        assert relative_error(grads[name], num) < 1e-6, name
    num = numeric_grad(loss, rows, np.arange(rows.size))
    assert relative_error(drows, num) < 1e-6


def _toy_set(rng, n):
    true_depth = rng.uniform(5, 70, n)
    feats = np.column_stack([true_depth / 80.0, rng.standard_normal((n, 3))])
    pos = rng.random(n) < 0.5
    off = rng.uniform(0.2, 0.8, n) * np.where(rng.random(n) < 0.5, -1, 1)
    s = np.where(pos, true_depth * (1 + rng.uniform(-0.02, 0.02, n)), true_depth * (1 + off))
    return feats, np.clip(s, 0.5, 80), pos.astype(float)


def test_separable_toy_set_is_learned():
    rng = np.random.default_rng(5)
    ev = ConsistencyEvaluator(4, d_max=80, seed=0, dtype=np.float64)
    xf, s, y = _toy_set(rng, 2000)
    rows = ev.make_input(xf, s).astype(np.float64)
    state = AdamState(lr=3e-3)
    for step in range(1500):
        idx = rng.choice(len(y), 256, replace=False)
        z = ev.logits(rows[idx])
        _, dz = weighted_bce_loss(sigmoid(z), y[idx], np.full(256, 1 / 256))
        ev.backward(dz)
        adam_step(ev.params, ev.grads, state)
    xt, st, yt = _toy_set(rng, 1000)
    acc = np.mean((ev.evaluate(ev.make_input(xt, st)) > 0.5) == (yt == 1))
    assert acc > 0.95
