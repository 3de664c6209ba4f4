"""PNG image loading/saving and resampling.

Working representation is an (H, W, 3) float64 array of values in [0, 1]
(stored value space; no transfer-function linearization).  8- and 16-bit
PNGs are supported both ways; RGBA drops alpha on load and grayscale is
replicated to three channels.  The OpenCV codec does the byte work.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageLoadError(ValueError):
    """Raised when a file cannot be decoded into a supported image."""


@dataclass
class Image:
    """An RGB image as float64 planes in [0,1] plus its source bit depth."""

    pixels: np.ndarray
    source_depth: int = 8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        if self.source_depth not in (8, 16):
            raise ValueError(f"source_depth must be 8 or 16, got {self.source_depth}")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _normalize_decoded(raw: np.ndarray) -> Image:
    if raw.dtype == np.uint8:
        depth, maxval = 8, 255.0
    elif raw.dtype == np.uint16:
        depth, maxval = 16, 65535.0
    else:
        raise ImageLoadError(f"unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, None], 3, axis=2)
    elif raw.ndim == 3 and raw.shape[2] == 3:
        rgb = raw[:, :, ::-1]  # BGR -> RGB
    elif raw.ndim == 3 and raw.shape[2] == 4:
        rgb = raw[:, :, 2::-1]  # BGRA -> RGB, alpha dropped
    else:
        raise ImageLoadError(f"unsupported color layout with shape {raw.shape}")
    return Image(pixels=rgb.astype(np.float64) / maxval, source_depth=depth)


def decode_png(data: bytes) -> Image:
    """Decode PNG bytes; raises ImageLoadError on anything undecodable."""
    if not data.startswith(PNG_SIGNATURE):
        raise ImageLoadError("not a PNG stream (bad signature)")
    raw = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageLoadError("PNG stream could not be decoded")
    return _normalize_decoded(raw)


def load_png(path) -> Image:
    raw = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageLoadError(f"cannot read image file {path!r}")
    return _normalize_decoded(raw)


def quantize(values: np.ndarray, bit_depth: int) -> np.ndarray:
    """Clamp to [0,1] and round half up to integer levels of the bit depth."""
    if bit_depth == 8:
        maxval, dtype = 255, np.uint8
    elif bit_depth == 16:
        maxval, dtype = 65535, np.uint16
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    clamped = np.clip(values, 0.0, 1.0)
    return np.floor(clamped * maxval + 0.5).astype(dtype)


def save_png(image, path, bit_depth: int = 8) -> None:
    """Write an Image, (H, W, 3) array, or 2-D plane as RGB/grayscale PNG."""
    values = image.pixels if isinstance(image, Image) else np.asarray(image)
    q = quantize(values, bit_depth)
    if q.ndim == 3 and q.shape[2] == 3:
        encoded = q[:, :, ::-1]  # RGB -> BGR
    elif q.ndim == 2:
        encoded = q
    else:
        raise ValueError(f"cannot save array of shape {q.shape} as PNG")
    if not cv2.imwrite(os.fspath(path), encoded):
        raise OSError(f"failed to write PNG to {path!r}")


def encode_png(image, bit_depth: int = 8) -> bytes:
    """Like :func:`save_png` but returns the encoded bytes."""
    values = image.pixels if isinstance(image, Image) else np.asarray(image)
    q = quantize(values, bit_depth)
    if q.ndim == 3 and q.shape[2] == 3:
        q = q[:, :, ::-1]
    ok, buf = cv2.imencode(".png", q)
    if not ok:
        raise OSError("PNG encoding failed")
    return buf.tobytes()


def _axis_coords(n_out: int, n_in: int):
    """Half-pixel-centered source coordinates for each output index."""
    scale = n_in / n_out
    coords = (np.arange(n_out) + 0.5) * scale - 0.5
    return np.clip(coords, 0.0, n_in - 1.0)


def _resize_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    ys = _axis_coords(height, arr.shape[0])
    xs = _axis_coords(width, arr.shape[1])
    y0 = np.clip(ys.astype(np.int64), 0, arr.shape[0] - 1)
    x0 = np.clip(xs.astype(np.int64), 0, arr.shape[1] - 1)
    y1 = np.minimum(y0 + 1, arr.shape[0] - 1)
    x1 = np.minimum(x0 + 1, arr.shape[1] - 1)
    fy = (ys - y0).reshape(-1, *([1] * (arr.ndim - 1)))
    fx = (xs - x0).reshape(1, -1, *([1] * (arr.ndim - 2)))
    rows0 = arr[y0]
    rows1 = arr[y1]
    top = rows0[:, x0] * (1.0 - fx) + rows0[:, x1] * fx
    bottom = rows1[:, x0] * (1.0 - fx) + rows1[:, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def _resize_nearest(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    ys = np.clip(np.round(_axis_coords(height, arr.shape[0])).astype(np.int64),
                 0, arr.shape[0] - 1)
    xs = np.clip(np.round(_axis_coords(width, arr.shape[1])).astype(np.int64),
                 0, arr.shape[1] - 1)
    return arr[ys][:, xs]


def resize(arr, size=None, factor=None, method: str = "bilinear"):
    """Resample a 2-D plane or (H, W, C) array to ``size`` or by ``factor``.

    ``size`` is (height, width); ``factor`` scales both axes (0.5 halves).
    Accepts and returns Image when given one.
    """
    if isinstance(arr, Image):
        return Image(
            pixels=resize(arr.pixels, size=size, factor=factor, method=method),
            source_depth=arr.source_depth,
        )
    arr = np.asarray(arr, dtype=np.float64)
    if (size is None) == (factor is None):
        raise ValueError("pass exactly one of size= or factor=")
    if factor is not None:
        size = (max(1, round(arr.shape[0] * factor)),
                max(1, round(arr.shape[1] * factor)))
    height, width = int(size[0]), int(size[1])
    if height < 1 or width < 1:
        raise ValueError(f"target dimensions must be >= 1, got {height}x{width}")
    if method == "bilinear":
        return _resize_bilinear(arr, height, width)
    if method == "nearest":
        return _resize_nearest(arr, height, width)
    raise ValueError(f"unknown resize method {method!r}")
