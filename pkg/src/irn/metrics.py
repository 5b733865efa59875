"""PSNR and SSIM on 8-bit images, evaluated on BT.601 Y or on RGB."""
from __future__ import annotations

import csv
import math

import numpy as np
from scipy.signal import correlate2d

from .images import ImageBuffer, rgb_to_y_float

CHANNEL_MODES = ("y", "rgb")


def _planes(a: ImageBuffer, b: ImageBuffer, mode: str) -> tuple[np.ndarray, np.ndarray]:
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels):
        raise ValueError(f"image size mismatch: {a.data.shape} vs {b.data.shape}")
    if mode not in CHANNEL_MODES:
        raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}")
    fa, fb = a.data.astype(np.float64), b.data.astype(np.float64)
    if mode == "y" and a.channels == 3 and a.colorspace == "RGB":
        return rgb_to_y_float(fa / 255.0)[..., None] * 255.0, rgb_to_y_float(fb / 255.0)[..., None] * 255.0
    return fa, fb


def psnr(a: ImageBuffer, b: ImageBuffer, channel_mode: str = "y") -> float:
    """10 log10(255^2 / MSE); identical images give ``math.inf``."""
    fa, fb = _planes(a, b, channel_mode)
    mse = float(np.mean((fa - fb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    win = _gaussian_window()
    if x.shape[0] < win.shape[0] or x.shape[1] < win.shape[1]:
        raise ValueError(f"SSIM needs at least 11x11 pixels, got {x.shape}")

    def filt(v):
        return correlate2d(v, win, mode="valid")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a: ImageBuffer, b: ImageBuffer, channel_mode: str = "y") -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5); per-channel mean in RGB mode."""
    fa, fb = _planes(a, b, channel_mode)
    if fa.shape[0] < 11 or fa.shape[1] < 11:
        raise ValueError(f"SSIM needs at least 11x11 pixels, got {fa.shape[:2]}")
    if np.array_equal(a.data, b.data):
        return 1.0
    return float(np.mean([_ssim_plane(fa[..., c], fb[..., c]) for c in range(fa.shape[2])]))


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def write_metrics_csv(path, rows) -> None:
    """Rows of (image_id, psnr_db, ssim)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "psnr_db", "ssim"])
        for image_id, p, s in rows:
            w.writerow([image_id, format_db(p), f"{s:.6f}"])
