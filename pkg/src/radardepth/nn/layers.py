"""Layer menu with analytic backward passes.

Spatial layers take a single sample shaped ``(C, H, W)``; ``Linear`` takes
rows ``(N, features)``. Each layer caches what its backward pass needs during
``forward`` and writes parameter gradients into ``self.grads``.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class Layer:
    def __init__(self, name: str = ""):
        self.name = name or type(self).__name__.lower()
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def astype(self, dtype) -> "Layer":
        for d in (self.params, self.buffers):
            for k in d:
                d[k] = d[k].astype(dtype)
        return self

    def _fail(self, msg: str):
        raise ShapeError(f"[{self.name}] {msg}")


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Layer):
    """Cross-correlation via im2col, weights ``(out, in, k, k)``."""

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=None, *, rng=None,
                 dtype=DEFAULT_DTYPE, name=""):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, kernel, stride
        self.padding = kernel // 2 if padding is None else padding
        fan_in = in_ch * kernel * kernel
        self.params["weight"] = _kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        p, k, s = self.padding, self.k, self.stride
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, training=True):
        if x.ndim != 3 or x.shape[0] != self.in_ch:
            self._fail(f"expected input ({self.in_ch}, H, W), got {x.shape}")
        c, h, w = x.shape
        k, s, p = self.k, self.stride, self.padding
        ho, wo = self.out_size(h, w)
        if ho < 1 or wo < 1:
            self._fail(f"input {x.shape} too small for kernel {k}, padding {p}")
        xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((c, k, k, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
        cols = cols.reshape(c * k * k, ho * wo)
        wm = self.params["weight"].reshape(self.out_ch, -1)
        out = wm @ cols
        out += self.params["bias"][:, None]
        self._cache = (cols, x.shape, xp.shape)
        return out.reshape(self.out_ch, ho, wo)

    def backward(self, grad):
        cols, xshape, xpshape = self._cache
        c, h, w = xshape
        k, s, p = self.k, self.stride, self.padding
        _, ho, wo = grad.shape
        g2 = grad.reshape(self.out_ch, -1)
        wm = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] = (g2 @ cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = g2.sum(axis=1)
        dcols = (wm.T @ g2).reshape(c, k, k, ho, wo)
        dxp = np.zeros(xpshape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dcols[:, i, j]
        self._cache = None
        return dxp[:, p:p + h, p:p + w] if p else dxp


class BatchNorm2d(Layer):
    """Per-channel normalisation over the spatial extent of one sample.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, channels, momentum=0.9, eps=1e-5, *, dtype=DEFAULT_DTYPE, name=""):
        super().__init__(name)
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x, training=True):
        if x.ndim != 3 or x.shape[0] != self.channels:
            self._fail(f"expected input ({self.channels}, H, W), got {x.shape}")
        gamma = self.params["gamma"][:, None, None]
        beta = self.params["beta"][:, None, None]
        if training:
            mu = x.mean(axis=(1, 2))
            var = x.var(axis=(1, 2))
            m = self.momentum
            self.buffers["running_mean"] = (m * self.buffers["running_mean"] + (1 - m) * mu).astype(x.dtype)
            self.buffers["running_var"] = (m * self.buffers["running_var"] + (1 - m) * var).astype(x.dtype)
        else:
            mu = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = (x - mu[:, None, None]) * inv_std[:, None, None]
        self._cache = (xhat, inv_std, training)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv_std, training = self._cache
        self.grads["gamma"] = (grad * xhat).sum(axis=(1, 2))
        self.grads["beta"] = grad.sum(axis=(1, 2))
        dxhat = grad * self.params["gamma"][:, None, None]
        if not training:
            return dxhat * inv_std[:, None, None]
        n = xhat.shape[1] * xhat.shape[2]
        s1 = dxhat.sum(axis=(1, 2), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
        self._cache = None
        return (inv_std[:, None, None] / n) * (n * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    def forward(self, x, training=True):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._mask, grad, 0).astype(grad.dtype, copy=False)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; ties route the gradient to the first element."""

    def forward(self, x, training=True):
        if x.ndim != 3 or x.shape[1] % 2 or x.shape[2] % 2:
            self._fail(f"expected (C, H, W) with even H and W, got {x.shape}")
        c, h, w = x.shape
        r = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
        idx = r.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        idx, (c, h, w) = self._cache
        g = np.zeros((c, h // 2, w // 2, 4), dtype=grad.dtype)
        np.put_along_axis(g, idx[..., None], grad[..., None], axis=-1)
        return g.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


class UpsampleNearest2(Layer):
    def forward(self, x, training=True):
        if x.ndim != 3:
            self._fail(f"expected (C, H, W), got {x.shape}")
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, grad):
        c, h, w = grad.shape
        return grad.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


class Linear(Layer):
    """``y = x @ W + b`` with ``W`` shaped ``(in, out)``."""

    def __init__(self, in_features, out_features, *, rng=None, zero_init=False,
                 dtype=DEFAULT_DTYPE, name=""):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = in_features, out_features
        if zero_init:
            self.params["weight"] = np.zeros((in_features, out_features), dtype=dtype)
        else:
            self.params["weight"] = _kaiming_uniform(rng, (in_features, out_features), in_features, dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x, training=True):
        squeeze = x.ndim == 1
        x2 = x[None, :] if squeeze else x
        if x2.ndim != 2 or x2.shape[1] != self.in_features:
            self._fail(f"expected (N, {self.in_features}), got {x.shape}")
        self._cache = (x2, squeeze)
        out = x2 @ self.params["weight"] + self.params["bias"]
        return out[0] if squeeze else out

    def backward(self, grad):
        x2, squeeze = self._cache
        g2 = grad[None, :] if squeeze else grad
        self.grads["weight"] = x2.T @ g2
        self.grads["bias"] = g2.sum(axis=0)
        dx = g2 @ self.params["weight"].T
        return dx[0] if squeeze else dx


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype if x.dtype.kind == "f" else np.float64)


class Sigmoid(Layer):
    def forward(self, x, training=True):
        self._out = sigmoid(x)
        return self._out

    def backward(self, grad):
        s = self._out
        return grad * s * (1 - s)


class Sequential:
    """Ordered container; parameter names are ``"<layer>.<param>"``."""

    def __init__(self, layers: Iterable[Layer], check_finite: bool = False):
        self.layers = list(layers)
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names: {names}")
        self.check_finite = check_finite

    def forward(self, x, training=True):
        for layer in self.layers:
            x = layer.forward(x, training)
            if self.check_finite and not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite activation after layer {layer.name}")
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.grads.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.buffers.items()}

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for l in self.layers:
            for k, v in l.params.items():
                out[f"{l.name}.{k}"] = v
            for k, v in l.buffers.items():
                out[f"{l.name}.{k}"] = v
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = set(expected) - set(state)
        if missing:
            raise KeyError(f"missing tensors: {sorted(missing)}")
        for l in self.layers:
            for store in (l.params, l.buffers):
                for k in store:
                    arr = np.asarray(state[f"{l.name}.{k}"])
                    if arr.shape != store[k].shape:
                        raise ShapeError(
                            f"[{l.name}] {k}: checkpoint shape {arr.shape} != model shape {store[k].shape}")
                    store[k] = arr.astype(store[k].dtype).copy()

    def astype(self, dtype) -> "Sequential":
        for l in self.layers:
            l.astype(dtype)
        return self
