"""Binary depth/flow maps, point files, PGM/PPM images and checkpoints.

All binary formats are little-endian and start with a 4-byte magic.
"""
from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, RadarReturn, project_points
from .sparse_depth import SparseDepthMap


class FormatError(ValueError):
    """Malformed file; ``path`` names the offending file."""

    def __init__(self, path, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = str(path)


SDM1 = b"SDM1"
SDM2 = b"SDM2"
RFCK = b"RFCK"
CHECKPOINT_VERSION = 1


# -- depth / flow maps ---------------------------------------------------

def encode_depth(values: np.ndarray) -> bytes:
    v = np.asarray(values, dtype=np.float64)
    h, w = v.shape
    payload = np.where(v > 0, v, 0.0).astype("<f4")
    return SDM1 + struct.pack("<II", w, h) + payload.tobytes()


def decode_depth(blob: bytes, path="<bytes>") -> np.ndarray:
    if blob[:4] != SDM1:
        raise FormatError(path, f"bad magic {blob[:4]!r}, expected {SDM1!r}")
    if len(blob) < 12:
        raise FormatError(path, "truncated header")
    w, h = struct.unpack_from("<II", blob, 4)
    if len(blob) != 12 + 4 * w * h:
        raise FormatError(path, f"payload is {len(blob) - 12} bytes, expected {4 * w * h}")
    return np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)


def save_depth(path, depth) -> None:
    values = depth.values if isinstance(depth, SparseDepthMap) else depth
    Path(path).write_bytes(encode_depth(values))


def load_depth(path) -> SparseDepthMap:
    return SparseDepthMap(decode_depth(Path(path).read_bytes(), path))


def save_flow(path, flow: np.ndarray) -> None:
    f = np.asarray(flow, dtype=np.float64)
    if f.ndim != 3 or f.shape[0] != 2:
        raise ValueError(f"flow must be (2, H, W), got {f.shape}")
    _, h, w = f.shape
    Path(path).write_bytes(SDM2 + struct.pack("<II", w, h) + f.astype("<f4").tobytes())


def load_flow(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != SDM2:
        raise FormatError(path, f"bad magic {blob[:4]!r}, expected {SDM2!r}")
    w, h = struct.unpack_from("<II", blob, 4)
    if len(blob) != 12 + 8 * w * h:
        raise FormatError(path, f"payload is {len(blob) - 12} bytes, expected {8 * w * h}")
    return np.frombuffer(blob, dtype="<f4", offset=12).reshape(2, h, w).astype(np.float64)


# -- point files -----------------------------------------------------------

def _read_rows(path, ncols: int) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != ncols:
                raise FormatError(path, f"line {lineno}: expected {ncols} numbers, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise FormatError(path, f"line {lineno}: not numeric: {line!r}") from None
            if not vals[-1] > 0:
                raise FormatError(path, f"line {lineno}: Z must be positive")
            rows.append(vals)
    return np.asarray(rows, dtype=np.float64).reshape(-1, ncols)


def save_lidar_points(path, xyz: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# X Y Z (meters, camera frame)\n")
        for x, y, z in np.asarray(xyz, dtype=np.float64).tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def load_lidar_points(path) -> np.ndarray:
    return _read_rows(path, 3)


def save_radar(path, returns) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# X Z (meters, camera frame; elevation unknown)\n")
        for r in returns:
            fh.write(f"{float(r.x)!r} {float(r.z)!r}\n")


def load_radar(path) -> list[RadarReturn]:
    return [RadarReturn(x, z) for x, z in _read_rows(path, 2)]


def depth_to_points(lm: SparseDepthMap, cam: CameraIntrinsics) -> np.ndarray:
    """Back-project measured pixels to camera-frame points (row-major order)."""
    ys, xs = np.nonzero(lm.mask)
    z = lm.values[ys, xs]
    return np.column_stack([(xs - cam.cx) * z / cam.fx, (ys - cam.cy) * z / cam.fy, z])


def points_to_depth(xyz: np.ndarray, cam: CameraIntrinsics) -> SparseDepthMap:
    """Project points into a sparse map; the nearest point wins per pixel."""
    lm = SparseDepthMap.empty(cam.width, cam.height)
    if len(xyz):
        u, v, ok = project_points(xyz, cam)
        lm.write_min(u[ok], v[ok], np.asarray(xyz)[ok, 2])
    return lm


# -- PGM / PPM ---------------------------------------------------------------

def save_pgm(path, gray: np.ndarray) -> None:
    """8-bit binary PGM; float input in [0, 1] is scaled to 0..255."""
    g = np.asarray(gray)
    if g.dtype != np.uint8:
        g = np.round(np.clip(g, 0, 1) * 255).astype(np.uint8)
    h, w = g.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + g.tobytes())


def save_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def _pnm_header(blob: bytes, path):
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(path, "truncated PNM header")
        tokens.append(int(blob[start:pos]))
    return tokens, pos + 1


def load_pgm(path) -> np.ndarray:
    """Binary PGM as float64 in [0, 1]."""
    blob = Path(path).read_bytes()
    if blob[:2] != b"P5":
        raise FormatError(path, f"bad magic {blob[:2]!r}, expected b'P5'")
    (w, h, maxval), pos = _pnm_header(blob, path)
    if maxval != 255 or len(blob) - pos != w * h:
        raise FormatError(path, "only 8-bit PGM with exact payload is supported")
    return np.frombuffer(blob, dtype=np.uint8, offset=pos).reshape(h, w) / 255.0


def render_depth(values: np.ndarray, d_min: float = 1.0, d_max: float = 80.0,
                 color: bool = False) -> np.ndarray:
    """Inverse-depth grayscale: ``d_min`` maps to 255, ``d_max`` to 0.

    Returns ``(H, W)`` uint8, or ``(H, W, 3)`` with unmeasured pixels pure red
    when ``color`` is set (black otherwise).
    """
    if not 0 < d_min < d_max:
        raise ValueError(f"need 0 < min < max, got {d_min}, {d_max}")
    v = np.asarray(values, dtype=np.float64)
    meas = v > 0
    inv = np.where(meas, 1.0 / np.where(meas, v, 1.0), 0.0)
    t = (inv - 1.0 / d_max) / (1.0 / d_min - 1.0 / d_max)
    gray = np.where(meas, np.round(np.clip(t, 0, 1) * 255), 0).astype(np.uint8)
    if not color:
        return gray
    rgb = np.repeat(gray[..., None], 3, axis=2)
    rgb[~meas] = (255, 0, 0)
    return rgb


# -- checkpoints -----------------------------------------------------------

def encode_checkpoint(tensors: dict[str, np.ndarray], d_max: float, feature_channels: int) -> bytes:
    parts = [RFCK, struct.pack("<IfI", CHECKPOINT_VERSION, d_max, feature_channels)]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        a = np.asarray(arr)
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(blob: bytes, path="<bytes>"):
    """Returns ``(tensors, d_max, feature_channels)``."""
    if blob[:4] != RFCK:
        raise FormatError(path, f"bad magic {blob[:4]!r}, expected {RFCK!r}")
    if len(blob) < 20:
        raise FormatError(path, "truncated checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise FormatError(path, "CRC mismatch")
    version, d_max, channels = struct.unpack_from("<IfI", body, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(path, f"unsupported checkpoint version {version}")
    pos = 16
    tensors = {}
    try:
        while pos < len(body):
            (n,) = struct.unpack_from("<I", body, pos)
            name = body[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", body, pos)
            shape = struct.unpack_from(f"<{rank}I", body, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * count > len(body):
                raise FormatError(path, f"tensor {name!r} runs past end of file")
            tensors[name] = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
            pos += 4 * count
    except struct.error as exc:
        raise FormatError(path, f"truncated tensor record ({exc})") from None
    return tensors, float(d_max), int(channels)


def save_checkpoint(path, estimator) -> None:
    tensors = {f"extractor.{k}": v for k, v in estimator.extractor_.net.state_dict().items()}
    tensors.update({f"evaluator.{k}": v for k, v in estimator.evaluator_.net.state_dict().items()})
    blob = encode_checkpoint(tensors, estimator.evaluator_.d_max, estimator.extractor_.out_channels)
    tmp = f"{path}.tmp"
    Path(tmp).write_bytes(blob)
    os.replace(tmp, path)


def load_checkpoint(path, **estimator_kwargs):
    """Rebuild a fitted :class:`LateFusionDepthEstimator` from a checkpoint."""
    from .pipeline import LateFusionDepthEstimator

    tensors, d_max, channels = decode_checkpoint(Path(path).read_bytes(), path)
    try:
        in_ch = tensors["extractor.stem_conv.weight"].shape[1]
        fc = sorted(k for k in tensors if k.startswith("evaluator.fc") and k.endswith(".weight"))
        hidden = tuple(tensors[k].shape[1] for k in fc)
    except KeyError as exc:
        raise FormatError(path, f"missing tensor {exc}") from None
    est = LateFusionDepthEstimator(d_max=d_max, feature_channels=channels, hidden=hidden,
                                   **estimator_kwargs)
    est._init_networks(in_ch)
    est.extractor_.net.load_state_dict(
        {k[len("extractor."):]: v for k, v in tensors.items() if k.startswith("extractor.")})
    est.evaluator_.net.load_state_dict(
        {k[len("evaluator."):]: v for k, v in tensors.items() if k.startswith("evaluator.")})
    return est
