"""Image-only feature extraction network F.

The radar never enters this network; radar depth is joined with the
features pixelwise afterwards (see :mod:`radardepth.evaluator`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import BatchNorm2d, Conv2d, MaxPool2, ReLU, Sequential, ShapeError, UpsampleNearest2
from .nn.layers import DEFAULT_DTYPE

#: optical flow (pixels) is scaled by this before entering the network
FLOW_SCALE = 0.05


def make_coord_map(width: int, height: int) -> np.ndarray:
    """``(2, H, W)`` map: channel 0 is ``x / (W-1)``, channel 1 is ``y / (H-1)``."""
    if width < 2 or height < 2:
        raise ValueError(f"coordinate map needs width, height >= 2, got {width}x{height}")
    xs = np.arange(width, dtype=np.float64) / (width - 1)
    ys = np.arange(height, dtype=np.float64) / (height - 1)
    out = np.empty((2, height, width))
    out[0] = xs[None, :]
    out[1] = ys[:, None]
    return out


@dataclass
class ExtractorInput:
    image: np.ndarray  # (H, W) or (C, H, W), intensities in [0, 1]
    flow: np.ndarray | None = None  # (2, H, W) pixels; None means zero flow
    coords: np.ndarray | None = None  # (2, H, W); built on demand

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim == 2:
            img = img[None]
        if img.ndim != 3 or img.shape[0] not in (1, 3):
            raise ValueError(f"image must be (H, W) or (1|3, H, W), got {np.shape(self.image)}")
        self.image = img
        h, w = img.shape[1:]
        self.flow = np.zeros((2, h, w)) if self.flow is None else np.asarray(self.flow, dtype=np.float64)
        self.coords = make_coord_map(w, h) if self.coords is None else np.asarray(self.coords, dtype=np.float64)
        for name in ("flow", "coords"):
            arr = getattr(self, name)
            if arr.shape != (2, h, w):
                raise ValueError(f"{name} must be (2, {h}, {w}), got {arr.shape}")

    @property
    def channels(self) -> int:
        return self.image.shape[0] + 4

    def stack(self, dtype=DEFAULT_DTYPE) -> np.ndarray:
        return np.concatenate([self.image, self.flow * FLOW_SCALE, self.coords]).astype(dtype)


class FeatureExtractor:
    """Encoder-decoder producing a full-resolution ``c``-channel feature map.

    stem conv3x3 -> two down stages [conv-BN-ReLU x2, maxpool] -> bottleneck
    conv -> two up stages [nearest x2, conv-BN-ReLU] -> 1x1 head. Input height
    and width must be divisible by 4.
    """

    def __init__(self, in_channels: int = 5, out_channels: int = 32, seed: int = 0,
                 dtype=DEFAULT_DTYPE):
        rng = np.random.default_rng(seed)
        self.in_channels, self.out_channels = in_channels, out_channels

        def cbr(name, cin, cout):
            return [Conv2d(cin, cout, 3, rng=rng, dtype=dtype, name=f"{name}_conv"),
                    BatchNorm2d(cout, dtype=dtype, name=f"{name}_bn"),
                    ReLU(name=f"{name}_relu")]

        layers = []
        layers += cbr("stem", in_channels, 16)
        layers += cbr("down1a", 16, 32) + cbr("down1b", 32, 32) + [MaxPool2(name="pool1")]
        layers += cbr("down2a", 32, 64) + cbr("down2b", 64, 64) + [MaxPool2(name="pool2")]
        layers += cbr("bottleneck", 64, 64)
        layers += [UpsampleNearest2(name="up1")] + cbr("up1", 64, 32)
        layers += [UpsampleNearest2(name="up2")] + cbr("up2", 32, 32)
        layers += [Conv2d(32, out_channels, 1, rng=rng, dtype=dtype, name="head")]
        n_down = sum(isinstance(l, MaxPool2) for l in layers)
        n_up = sum(isinstance(l, UpsampleNearest2) for l in layers)
        assert n_down == n_up, "every downsampling must be mirrored by an upsampling"
        self.factor = 2 ** n_down
        self.net = Sequential(layers)
        self.dtype = dtype

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.net.named_params()

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return self.net.named_grads()

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ShapeError(f"extractor expects ({self.in_channels}, H, W) input, got {x.shape}")
        if x.shape[1] % self.factor or x.shape[2] % self.factor:
            raise ShapeError(f"input size {x.shape[1:]} must be divisible by {self.factor}")
        return self.net.forward(x.astype(self.dtype, copy=False), training)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.net.backward(grad.astype(self.dtype, copy=False))

    def astype(self, dtype) -> "FeatureExtractor":
        self.net.astype(dtype)
        self.dtype = dtype
        return self


def extract_features(inp: ExtractorInput, extractor: FeatureExtractor) -> np.ndarray:
    """Inference-mode feature map ``(c, H, W)``; ``F[:, y, x]`` is the vector at pixel (x, y)."""
    if inp.channels != extractor.in_channels:
        raise ShapeError(
            f"input has {inp.channels} channels but the extractor was built for {extractor.in_channels}")
    return extractor.forward(inp.stack(extractor.dtype), training=False)
