"""Corpus-level evaluation: roundtrip quality, LR validity, latent statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import make_guide
from .images import ImageBuffer, bicubic_resize, to_uint8
from .metrics import psnr, ssim
from .models import IrnModel, downscale, roundtrip
from .tensor import Tensor


@dataclass
class RoundtripRow:
    image_id: str
    psnr_db: float
    ssim: float
    bicubic_psnr_db: float
    bicubic_ssim: float


def bicubic_roundtrip(img: ImageBuffer, scale: int) -> ImageBuffer:
    lr = bicubic_resize(img, size=(img.height // scale, img.width // scale))
    return bicubic_resize(lr, size=(img.height, img.width))


def roundtrip_table(model: IrnModel, items, z_mode: str = "sample", seed: int = 0,
                    channel_mode: str = "y") -> list[RoundtripRow]:
    """Per-image roundtrip metrics next to the bicubic down+up baseline.

    ``items`` is a sequence of ``(image_id, ImageBuffer)``.
    """
    rows = []
    for name, img in items:
        rec = roundtrip(model, img, z_mode, seed)
        base = bicubic_roundtrip(img, model.scale)
        rows.append(RoundtripRow(name, psnr(img, rec, channel_mode), ssim(img, rec, channel_mode),
                                 psnr(img, base, channel_mode), ssim(img, base, channel_mode)))
    return rows


def mean_psnr(model: IrnModel, images, z_mode: str = "sample", seed: int = 0, channel_mode: str = "y") -> float:
    return float(np.mean([psnr(img, roundtrip(model, img, z_mode, seed), channel_mode) for img in images]))


def baseline_psnr(images, scale: int, channel_mode: str = "y") -> float:
    return float(np.mean([psnr(img, bicubic_roundtrip(img, scale), channel_mode) for img in images]))


def lr_psnr(model: IrnModel, images, channel_mode: str = "y") -> float:
    """Mean PSNR of the quantized LR output against the guide image."""
    vals = []
    for img in images:
        y, _ = downscale(model, img)
        grayscale = model.latent.y_channels == 1
        g = make_guide(img.to_float(), model.latent.factor, grayscale)
        guide = ImageBuffer(to_uint8(g), y.colorspace)
        vals.append(psnr(y, guide, "rgb" if grayscale else channel_mode))
    return float(np.mean(vals))


def z_seed_spread(model: IrnModel, images, seeds=(0, 1, 2, 3, 4)) -> tuple[float, list[float]]:
    """Standard deviation of the corpus-mean roundtrip PSNR across latent seeds."""
    vals = [mean_psnr(model, images, "sample", s) for s in seeds]
    return float(np.std(vals)), vals


def z_statistics(model: IrnModel, images, batch: int = 4) -> list[tuple[float, float]]:
    """(mean, variance) of the latent per batch of whole images."""
    out = []
    for i in range(0, len(images), batch):
        x = np.stack([im.to_float() for im in images[i:i + batch]])
        with T.no_grad():
            _, z = model.split(model.forward(Tensor(x)))
        out.append((float(z.data.mean()), float(z.data.var())))
    return out
