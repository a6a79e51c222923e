"""Image containers, the linear depth quantization codec, and PGM/PPM I/O.

Depth images use 0.0 as the reserved invalid (no-hit) value.  Quantized
depth keeps an explicit validity mask because the integer codes alone
cannot distinguish "far surface" from "no surface"; on disk the mask is a
separate 8-bit PGM (255 = valid) next to the 16-bit PGM code image and a
small JSON sidecar holding z_near / z_far / bit depth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChannelMismatch, DepthOutOfRange, DimensionMismatch, ParseError

INVALID_DEPTH = 0.0


def round_half_up(x: np.ndarray) -> np.ndarray:
    """Round with ties away from zero toward +inf (not banker's rounding)."""
    return np.floor(np.asarray(x) + 0.5)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel optical-axis depth in meters; 0.0 marks no-hit pixels."""

    data: np.ndarray  # (height, width) float64

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("depth data must be 2-D")
        if not np.all(np.isfinite(d)) or d.min() < 0.0:
            raise ValueError("depth values must be finite and >= 0")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.data > 0.0


@dataclass(frozen=True)
class RgbImage:
    """8-bit-per-channel color image."""

    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3 or d.dtype != np.uint8:
            raise ValueError("rgb data must be (h, w, 3) uint8")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class QuantizedDepthImage:
    """Integer depth codes over [z_near, z_far] plus a validity mask.

    Invalid pixels carry the maximum code; the mask is authoritative.
    """

    data: np.ndarray   # (height, width) uint8 or uint16
    valid: np.ndarray  # (height, width) bool
    z_near: float
    z_far: float
    bit_depth: int

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")
        if not (0 < self.z_near < self.z_far):
            raise ValueError("require 0 < z_near < z_far")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        d = np.asarray(self.data, dtype=dtype)
        m = np.asarray(self.valid, dtype=bool)
        if d.shape != m.shape or d.ndim != 2:
            raise ValueError("code image and mask shapes must match")
        d = d.copy()
        m = m.copy()
        d.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "valid", m)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def max_code(self) -> int:
        return (1 << self.bit_depth) - 1


def quantize_depth(depth: DepthImage, z_near: float, z_far: float,
                   bit_depth: int = 16) -> QuantizedDepthImage:
    """Linear code = round_half_up((d - z_near) / (z_far - z_near) * maxcode).

    Valid depths must already lie in [z_near, z_far]; invalid pixels get the
    max code and a false mask bit.  Round-trip error is bounded by half a
    quantization step.
    """
    valid = depth.valid
    d = depth.data
    if np.any(valid & ((d < z_near) | (d > z_far))):
        bad = d[valid & ((d < z_near) | (d > z_far))]
        raise DepthOutOfRange(
            f"depths outside [{z_near}, {z_far}]: e.g. {bad.flat[0]:.6g}")
    max_code = (1 << bit_depth) - 1
    codes = np.full(d.shape, max_code, dtype=np.int64)
    scaled = (d[valid] - z_near) / (z_far - z_near) * max_code
    codes[valid] = round_half_up(scaled).astype(np.int64)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return QuantizedDepthImage(codes.astype(dtype), valid, z_near, z_far, bit_depth)


def dequantize_depth(q: QuantizedDepthImage) -> DepthImage:
    """Invert quantize_depth; invalid pixels come back as 0.0."""
    d = q.z_near + q.data.astype(np.float64) / q.max_code * (q.z_far - q.z_near)
    d[~q.valid] = INVALID_DEPTH
    return DepthImage(d)


def slice_predicted_channels(image, z_near: float, z_far: float) -> QuantizedDepthImage:
    """Collapse a 3-identical-channel 8-bit prediction to one code channel.

    Raises ChannelMismatch if the channels differ anywhere.  The result has
    no invalid pixels: predictions encode depth everywhere.
    """
    data = image.data if isinstance(image, RgbImage) else np.asarray(image)
    if data.ndim != 3 or data.shape[2] != 3 or data.dtype != np.uint8:
        raise ValueError("expected an (h, w, 3) uint8 image")
    if np.any(data[:, :, 0] != data[:, :, 1]) or np.any(data[:, :, 0] != data[:, :, 2]):
        diff = np.argwhere((data[:, :, 0] != data[:, :, 1]) |
                           (data[:, :, 0] != data[:, :, 2]))
        r, c = diff[0]
        raise ChannelMismatch(f"channels differ at pixel (row={r}, col={c})")
    channel = data[:, :, 0]
    return QuantizedDepthImage(channel, np.ones(channel.shape, dtype=bool),
                               z_near, z_far, bit_depth=8)


def extract_silhouette(image, background=None) -> np.ndarray:
    """Binary object mask from a render.

    Depth input: mask of valid pixels.  RGB input: pixels differing from the
    exact rendered background color (pass the same background that was given
    to the renderer).
    """
    if isinstance(image, DepthImage):
        return image.valid.copy()
    if isinstance(image, RgbImage):
        if background is None:
            raise ValueError("background color required for RGB input")
        bg = np.asarray(background, dtype=np.uint8)
        return np.any(image.data != bg, axis=2)
    raise TypeError(f"unsupported image type {type(image).__name__}")


# --- netpbm I/O (binary PGM P5 / PPM P6) ---

def write_pgm(path, data: np.ndarray) -> None:
    """Write a binary PGM; 16-bit data goes out big-endian per the format."""
    data = np.asarray(data)
    if data.dtype == np.uint8:
        maxval = 255
        payload = data.tobytes()
    elif data.dtype == np.uint16:
        maxval = 65535
        payload = data.astype(">u2").tobytes()
    else:
        raise ValueError("PGM supports uint8 or uint16 data")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(payload)


def _read_netpbm_header(fh, magic: str, path) -> tuple[int, int, int]:
    def token():
        out = b""
        while True:
            ch = fh.read(1)
            if not ch:
                raise ParseError(f"{path}: truncated header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = fh.read(1)
                continue
            if ch.isspace():
                if out:
                    return out
                continue
            out += ch

    if token() != magic.encode("ascii"):
        raise ParseError(f"{path}: not a {magic} file")
    w, h, maxval = int(token()), int(token()), int(token())
    return w, h, maxval


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        w, h, maxval = _read_netpbm_header(fh, "P5", path)
        if maxval == 255:
            data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
        elif maxval == 65535:
            data = np.frombuffer(fh.read(2 * w * h), dtype=">u2").astype(np.uint16)
        else:
            raise ParseError(f"{path}: unsupported maxval {maxval}")
        if data.size != w * h:
            raise ParseError(f"{path}: truncated pixel data")
    return data.reshape(h, w)


def write_ppm(path, image: RgbImage) -> None:
    h, w = image.data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.data.tobytes())


def read_ppm(path) -> RgbImage:
    with open(path, "rb") as fh:
        w, h, maxval = _read_netpbm_header(fh, "P6", path)
        if maxval != 255:
            raise ParseError(f"{path}: unsupported maxval {maxval}")
        data = np.frombuffer(fh.read(3 * w * h), dtype=np.uint8)
        if data.size != 3 * w * h:
            raise ParseError(f"{path}: truncated pixel data")
    return RgbImage(data.reshape(h, w, 3))


def save_quantized_depth(q: QuantizedDepthImage, depth_path, mask_path) -> None:
    """Write code image + JSON sidecar (depth path with .json suffix) + mask."""
    depth_path = Path(depth_path)
    write_pgm(depth_path, q.data)
    sidecar = {"z_near": q.z_near, "z_far": q.z_far, "bit_depth": q.bit_depth}
    depth_path.with_suffix(".json").write_text(json.dumps(sidecar) + "\n")
    write_pgm(mask_path, np.where(q.valid, 255, 0).astype(np.uint8))


def load_quantized_depth(depth_path, mask_path) -> QuantizedDepthImage:
    depth_path = Path(depth_path)
    codes = read_pgm(depth_path)
    sidecar_path = depth_path.with_suffix(".json")
    try:
        meta = json.loads(sidecar_path.read_text())
        z_near, z_far = float(meta["z_near"]), float(meta["z_far"])
        bit_depth = int(meta["bit_depth"])
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ParseError(f"{sidecar_path}: {exc}") from exc
    mask = read_pgm(mask_path)
    if mask.shape != codes.shape:
        raise DimensionMismatch(
            f"mask {mask.shape} does not match depth {codes.shape}")
    return QuantizedDepthImage(codes, mask == 255, z_near, z_far, bit_depth)


def load_depth(depth_path, mask_path) -> DepthImage:
    """Read and dequantize a stored depth image."""
    return dequantize_depth(load_quantized_depth(depth_path, mask_path))
