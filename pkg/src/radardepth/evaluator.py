"""Image-depth consistency evaluator ``h([v, s]) -> p`` and its training loss."""
from __future__ import annotations

import numpy as np

from .nn import Linear, ReLU, Sequential, ShapeError, sigmoid
from .nn.layers import DEFAULT_DTYPE

PROB_CLAMP = 1e-7


class ConsistencyEvaluator:
    """MLP ``(c+1) -> hidden -> ReLU -> hidden -> ReLU -> 1``, sigmoid on top.

    The last layer starts at zero so an untrained evaluator outputs 0.5.
    """

    def __init__(self, feature_channels: int = 32, hidden: tuple[int, ...] = (64, 64),
                 d_max: float = 80.0, seed: int = 0, dtype=DEFAULT_DTYPE):
        rng = np.random.default_rng(seed)
        self.feature_channels = feature_channels
        self.d_max = float(d_max)
        widths = [feature_channels + 1, *hidden]
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            layers += [Linear(a, b, rng=rng, dtype=dtype, name=f"fc{i}"), ReLU(name=f"relu{i}")]
        layers.append(Linear(widths[-1], 1, rng=rng, zero_init=True, dtype=dtype, name="out"))
        self.net = Sequential(layers)
        self.dtype = dtype

    @property
    def params(self):
        return self.net.named_params()

    @property
    def grads(self):
        return self.net.named_grads()

    def make_input(self, features: np.ndarray, depths: np.ndarray) -> np.ndarray:
        """Rows ``[v, s]`` with ``s = depth / d_max`` clipped to [0, 1]."""
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.feature_channels:
            raise ShapeError(
                f"evaluator expects (N, {self.feature_channels}) features, got {features.shape}")
        s = np.clip(np.asarray(depths, dtype=np.float64) / self.d_max, 0.0, 1.0)
        return np.concatenate([features, s[:, None]], axis=1).astype(self.dtype)

    def logits(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.feature_channels + 1:
            raise ShapeError(f"evaluator expects (N, {self.feature_channels + 1}) rows, got {x.shape}")
        return self.net.forward(x.astype(self.dtype, copy=False))[:, 0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Probabilities ``p(e)`` for rows of concatenated ``[v, s]``, strictly inside (0, 1)."""
        p = sigmoid(self.logits(x))
        info = np.finfo(p.dtype)
        return np.clip(p, info.tiny, np.nextafter(p.dtype.type(1), p.dtype.type(0)))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Backprop logit gradients; returns gradient w.r.t. the ``[v, s]`` rows."""
        return self.net.backward(np.asarray(dlogits, dtype=self.dtype)[:, None])

    def astype(self, dtype) -> "ConsistencyEvaluator":
        self.net.astype(dtype)
        self.dtype = dtype
        return self


def class_weights(n_pos: int, n_neg: int, invert: bool = False) -> tuple[float, float]:
    """``(w_pos, w_neg)`` with each class weighted by its own share of the samples.

    ``invert`` swaps the two, giving the usual minority-upweighting scheme.
    """
    total = n_pos + n_neg
    if n_pos < 0 or n_neg < 0 or total < 1:
        raise ValueError(f"need at least one labeled entry, got n_pos={n_pos}, n_neg={n_neg}")
    w_pos, w_neg = n_pos / total, n_neg / total
    return (w_neg, w_pos) if invert else (w_pos, w_neg)


def weighted_bce_loss(p: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed weighted binary cross-entropy and its gradient w.r.t. the logits.

    Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` before the log; the
    logit gradient is ``w * (p - y)``.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if not (p.shape == y.shape == w.shape):
        raise ValueError(f"shape mismatch: p{p.shape} y{y.shape} w{w.shape}")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(np.sum(w * (-y * np.log(pc) - (1.0 - y) * np.log1p(-pc))))
    return loss, w * (p - y)
