"""8-bit image buffers, PNG I/O, BT.601 colour conversion and bicubic resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

COLORSPACES = ("RGB", "Grayscale", "YCbCr")

# BT.601 studio swing on [0, 1] inputs; rows give (Y, Cb, Cr) in units of 1/255.
_RGB2YCC = np.array([
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
]) / 255.0
_YCC_OFFSET = np.array([16.0, 128.0, 128.0]) / 255.0
_YCC2RGB = np.linalg.inv(_RGB2YCC)


class ImageIOError(IOError):
    pass


@dataclass
class ImageBuffer:
    """Row-major (H, W, C) uint8 raster with a colour-space tag."""

    data: np.ndarray
    colorspace: str = "RGB"

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.dtype != np.uint8:
            raise TypeError(f"ImageBuffer needs uint8 data, got {arr.dtype}")
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"ImageBuffer needs 1 or 3 channels, got shape {arr.shape}")
        if self.colorspace not in COLORSPACES:
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if (arr.shape[2] == 1) != (self.colorspace == "Grayscale"):
            raise ValueError(f"{self.colorspace} image cannot have {arr.shape[2]} channel(s)")
        self.data = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_float(self) -> np.ndarray:
        return self.data.astype(np.float64) / 255.0

    @classmethod
    def from_float(cls, arr: np.ndarray, colorspace: str | None = None) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if colorspace is None:
            colorspace = "Grayscale" if arr.shape[2] == 1 else "RGB"
        return cls(to_uint8(arr), colorspace)

    def __eq__(self, other):
        return (isinstance(other, ImageBuffer) and self.colorspace == other.colorspace
                and np.array_equal(self.data, other.data))


def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit codes, clamped, rounding half away from zero."""
    return round_half_away(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def load_png(path) -> ImageBuffer:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if im.format != "PNG":
                raise ImageIOError(f"{path}: not a PNG file")
            if mode in ("I", "I;16", "I;16B", "I;16L", "F") or im.info.get("bitdepth", 8) > 8:
                raise ImageIOError(f"{path}: unsupported bit depth (mode {mode}); only 8-bit PNG is supported")
            if mode == "L":
                return ImageBuffer(np.asarray(im, dtype=np.uint8), "Grayscale")
            if mode == "RGB":
                return ImageBuffer(np.asarray(im, dtype=np.uint8), "RGB")
            if mode in ("P", "1"):
                return ImageBuffer(np.asarray(im.convert("RGB"), dtype=np.uint8), "RGB")
            raise ImageIOError(f"{path}: unsupported PNG mode {mode}")
    except FileNotFoundError:
        raise
    except ImageIOError:
        raise
    except Exception as exc:
        raise ImageIOError(f"{path}: malformed PNG ({exc})") from exc


def save_png(img: ImageBuffer, path) -> int:
    """Write ``img`` losslessly; returns the file size in bytes.

    YCbCr buffers are stored as their raw 3-channel codes.
    """
    path = Path(path)
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(arr, mode="L" if img.channels == 1 else "RGB").save(path, format="PNG", optimize=True)
    return path.stat().st_size


def rgb_to_ycbcr_float(rgb: np.ndarray) -> np.ndarray:
    return rgb @ _RGB2YCC.T + _YCC_OFFSET


def ycbcr_to_rgb_float(ycc: np.ndarray) -> np.ndarray:
    return (ycc - _YCC_OFFSET) @ _YCC2RGB.T


def rgb_to_y_float(rgb: np.ndarray) -> np.ndarray:
    return rgb @ _RGB2YCC[0] + _YCC_OFFSET[0]


def rgb_to_ycbcr(img: ImageBuffer) -> ImageBuffer:
    if img.colorspace != "RGB":
        raise ValueError(f"rgb_to_ycbcr expects an RGB image, got {img.colorspace}")
    return ImageBuffer(to_uint8(rgb_to_ycbcr_float(img.to_float())), "YCbCr")


def ycbcr_to_rgb(img: ImageBuffer) -> ImageBuffer:
    if img.colorspace != "YCbCr":
        raise ValueError(f"ycbcr_to_rgb expects a YCbCr image, got {img.colorspace}")
    return ImageBuffer(to_uint8(ycbcr_to_rgb_float(img.to_float())), "RGB")


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Y channel of BT.601 YCbCr as a grayscale image."""
    return ImageBuffer(to_uint8(rgb_to_y_float(img.to_float())), "Grayscale")


# --- bicubic -----------------------------------------------------------------

CUBIC_A = -0.5


def cubic_kernel(x, a: float = CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    return np.where(
        x <= 1.0,
        (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0,
        np.where(x < 2.0, a * (x3 - 5.0 * x2 + 8.0 * x - 4.0), 0.0),
    )


def resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) resampling matrix for one axis.

    Pixel centres are aligned (half-pixel convention). When shrinking, the
    kernel is stretched by the shrink factor for antialiasing. Taps falling
    outside the image are dropped and the remaining weights renormalised.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"degenerate resize {n_in} -> {n_out}")
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    support = 2.0 * stretch
    centers = (np.arange(n_out) + 0.5) * scale
    lo = np.floor(centers - support).astype(int)
    taps = int(math.ceil(2 * support)) + 2
    idx = lo[:, None] + np.arange(taps)[None, :]
    w = cubic_kernel((idx + 0.5 - centers[:, None]) / stretch)
    w[(idx < 0) | (idx >= n_in)] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((n_out, n_in))
    rows = np.repeat(np.arange(n_out), taps)
    valid = ((idx >= 0) & (idx < n_in)).ravel()
    np.add.at(mat, (rows[valid], idx.ravel()[valid]), w.ravel()[valid])
    return mat


def output_size(n: int, scale) -> int:
    return int(math.floor(n * Fraction(scale) + Fraction(1, 2)))


def bicubic_resize_float(arr: np.ndarray, scale=None, size: tuple[int, int] | None = None) -> np.ndarray:
    """Resize an (H, W[, C]) float array by ``scale`` or to ``size=(H, W)``."""
    h, w = arr.shape[:2]
    if size is None:
        if scale is None or Fraction(scale) <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        size = (output_size(h, scale), output_size(w, scale))
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ValueError(f"degenerate output size {size} for input {h}x{w}")
    mh = resize_weights(h, oh)
    mw = resize_weights(w, ow)
    return np.einsum("oh,hwc,pw->opc", mh, arr.reshape(h, w, -1), mw).reshape((oh, ow) + arr.shape[2:])


def bicubic_resize(img: ImageBuffer, scale=None, size: tuple[int, int] | None = None) -> ImageBuffer:
    out = bicubic_resize_float(img.to_float(), scale, size)
    return ImageBuffer(to_uint8(out), img.colorspace)
