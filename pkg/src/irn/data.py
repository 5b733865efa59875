"""Toy image corpus and the patch sampler that feeds training."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .images import ImageBuffer, bicubic_resize_float, load_png, rgb_to_y_float, save_png, to_uint8
from .rng import make_rng


def toy_image(rng: np.random.Generator, size: int = 96) -> ImageBuffer:
    """Sum of a few oriented colour gratings plus smoothed noise, as 8-bit RGB.

    Periods (log-uniform, 3 to 30 px) and the noise blur (sigma 0.7 to 2 px)
    leave enough detail near Nyquist that bicubic 2x down+up lands around
    32 dB, roughly where natural photographs sit.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for _ in range(int(rng.integers(2, 5))):
        period = float(np.exp(rng.uniform(np.log(3.0), np.log(30.0))))
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
        img += wave[:, :, None] * rng.uniform(0.03, 0.15, size=3)
    noise = gaussian_filter(rng.standard_normal((size, size, 3)), sigma=(rng.uniform(0.7, 2.0),) * 2 + (0,))
    img += 0.25 * noise / (noise.std() + 1e-12) * rng.uniform(0.2, 0.6)
    img += rng.uniform(0.35, 0.65, size=3)
    return ImageBuffer(to_uint8(img), "RGB")


def toy_corpus(n: int = 8, size: int = 96, seed: int = 0) -> list[ImageBuffer]:
    rng = make_rng(seed)
    return [toy_image(rng, size) for _ in range(n)]


def write_corpus(images, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = directory / f"img_{i:03d}.png"
        save_png(img, p)
        paths.append(p)
    return paths


def load_dir(directory) -> list[tuple[str, ImageBuffer]]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG files in {directory}")
    return [(p.stem, load_png(p)) for p in paths]


def make_guide(crop: np.ndarray, scale: int, grayscale: bool = False) -> np.ndarray:
    """Reference degraded image for a float (H, W, 3) crop."""
    if grayscale:
        return rgb_to_y_float(crop)[:, :, None]
    return bicubic_resize_float(crop, size=(crop.shape[0] // scale, crop.shape[1] // scale))


def sample_patches(images, batch: int, crop: int, scale: int, rng: np.random.Generator,
                   flips: bool = True, grayscale_guide: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Random aligned (HR crop, guide) pairs as float arrays (N, h, w, C).

    The guide is computed from the crop after flipping, never cropped out of a
    downscaled image.
    """
    if not images:
        raise ValueError("dataset is empty")
    if crop % scale:
        raise ValueError(f"crop {crop} is not divisible by scale {scale}")
    xs, gs = [], []
    for _ in range(batch):
        img = images[int(rng.integers(len(images)))]
        if img.height < crop or img.width < crop:
            raise ValueError(f"image {img.height}x{img.width} is smaller than crop {crop}")
        top = int(rng.integers(img.height - crop + 1))
        left = int(rng.integers(img.width - crop + 1))
        x = img.data[top:top + crop, left:left + crop].astype(np.float64) / 255.0
        if flips:
            if rng.random() < 0.5:
                x = x[:, ::-1]
            if rng.random() < 0.5:
                x = x[::-1]
        x = np.ascontiguousarray(x)
        xs.append(x)
        gs.append(make_guide(x, scale, grayscale_guide))
    return np.stack(xs), np.stack(gs)
