"""Block-DCT lossy codec with JPEG-style quality scaling and an idealised rate.

Stream container (``IRNL``), little-endian::

    magic      4 bytes  b"IRNL"
    version    u8       1
    quality    u8
    height     u32      original (unpadded) size
    width      u32
    channels   u8       1 (grayscale) or 3 (YCbCr)
    planes     channels x (padded_h * padded_w) int16, C order

Each plane holds the quantized DCT coefficients of one channel with every
8x8 block stored in place.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from ..images import ImageBuffer, rgb_to_ycbcr_float, round_half_away, to_uint8, ycbcr_to_rgb_float

MAGIC = b"IRNL"
VERSION = 1
BLOCK = 8
_HEADER = struct.Struct("<4sBBIIB")
HEADER_BITS = 8 * _HEADER.size

# Luminance quantization table from Annex K of the baseline JPEG standard.
BASE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


class CodecError(ValueError):
    pass


def _check_quality(q) -> int:
    if isinstance(q, bool) or int(q) != q or not 1 <= q <= 100:
        raise CodecError(f"quality must be an integer in [1, 100], got {q!r}")
    return int(q)


def quality_scale(q: int) -> int:
    """Percentage applied to the base table (100 at q=50)."""
    q = _check_quality(q)
    return 5000 // q if q < 50 else 200 - 2 * q


def quant_table(q: int) -> np.ndarray:
    t = np.floor((BASE_TABLE * quality_scale(q) + 50) / 100)
    return np.clip(t, 1, 255)


def block_dct(planes: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of every 8x8 block of (H, W, C) planes, H and W multiples of 8."""
    h, w, c = planes.shape
    b = planes.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK, c)
    return dctn(b, type=2, axes=(1, 3), norm="ortho").reshape(h, w, c)


def block_idct(coefs: np.ndarray) -> np.ndarray:
    h, w, c = coefs.shape
    b = coefs.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK, c)
    return idctn(b, type=2, axes=(1, 3), norm="ortho").reshape(h, w, c)


def _tile(table: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.tile(table, (h // BLOCK, w // BLOCK))[:, :, None]


@dataclass(eq=False)
class LossyStream:
    quality: int
    height: int
    width: int
    coeffs: np.ndarray  # (padded_h, padded_w, channels) int16

    @property
    def channels(self) -> int:
        return self.coeffs.shape[2]

    def __eq__(self, other):
        return (isinstance(other, LossyStream)
                and (self.quality, self.height, self.width) == (other.quality, other.height, other.width)
                and np.array_equal(self.coeffs, other.coeffs))

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, self.quality, self.height, self.width, self.channels)
        planes = np.ascontiguousarray(np.moveaxis(self.coeffs, 2, 0), dtype="<i2")
        return head + planes.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LossyStream":
        if len(data) < _HEADER.size:
            raise CodecError("truncated stream")
        magic, version, q, h, w, c = _HEADER.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise CodecError("not an IRNL stream")
        ph, pw = _padded(h), _padded(w)
        body = np.frombuffer(data, dtype="<i2", offset=_HEADER.size)
        if body.size != c * ph * pw:
            raise CodecError("stream length does not match its header")
        coeffs = np.moveaxis(body.reshape(c, ph, pw), 0, 2).astype(np.int16)
        return cls(q, h, w, coeffs)


def _padded(n: int) -> int:
    return -(-n // BLOCK) * BLOCK


def zero_order_entropy(symbols: np.ndarray) -> float:
    """Shannon entropy in bits/symbol of the empirical symbol distribution."""
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def stream_bits(stream: LossyStream) -> float:
    """Idealised size: per-channel zero-order entropy times symbol count, plus the header."""
    c = stream.coeffs
    per_plane = c.shape[0] * c.shape[1]
    return HEADER_BITS + sum(zero_order_entropy(c[:, :, k]) * per_plane for k in range(c.shape[2]))


def lossy_encode(img: ImageBuffer, q: int) -> tuple[LossyStream, float]:
    """Quantized block-DCT coefficients of ``img`` and the rate in bits per (input) pixel."""
    q = _check_quality(q)
    x = img.to_float()
    if img.colorspace == "RGB":
        x = rgb_to_ycbcr_float(x)
    elif img.colorspace != "Grayscale":
        raise CodecError(f"cannot encode a {img.colorspace} image")
    h, w = img.height, img.width
    ph, pw = _padded(h), _padded(w)
    x = np.pad(x * 255.0 - 128.0, ((0, ph - h), (0, pw - w), (0, 0)), mode="symmetric")
    coeffs = round_half_away(block_dct(x) / _tile(quant_table(q), ph, pw))
    stream = LossyStream(q, h, w, np.clip(coeffs, -32768, 32767).astype(np.int16))
    return stream, stream_bits(stream) / (h * w)


def lossy_decode(stream: LossyStream) -> ImageBuffer:
    ph, pw, c = stream.coeffs.shape
    x = block_idct(stream.coeffs * _tile(quant_table(stream.quality), ph, pw))
    x = (x[:stream.height, :stream.width] + 128.0) / 255.0
    if c == 3:
        return ImageBuffer(to_uint8(ycbcr_to_rgb_float(x)), "RGB")
    return ImageBuffer(to_uint8(x), "Grayscale")


class LossyCodec:
    """Fixed-quality encoder/decoder pair."""

    def __init__(self, quality: int):
        self.quality = _check_quality(quality)

    @property
    def table(self) -> np.ndarray:
        return quant_table(self.quality)

    def encode(self, img: ImageBuffer) -> tuple[LossyStream, float]:
        return lossy_encode(img, self.quality)

    def decode(self, stream: LossyStream) -> ImageBuffer:
        return lossy_decode(stream)

    def __call__(self, img: ImageBuffer) -> tuple[ImageBuffer, float]:
        stream, bpp = self.encode(img)
        return self.decode(stream), bpp
