"""Rate-distortion evaluation of rescaling + storage pipelines.

A pipeline is written ``down+store[+crm]+up``, e.g. ``irn+lossy+crm+irn`` or
``bicubic+png+bicubic``. ``down``/``up`` are ``bicubic`` or ``irn``; ``store``
is ``none`` (raw 8-bit), ``png`` (actual file bytes) or ``lossy`` (in-repo
codec at each quality). Rates are bits per pixel of the original HR image.
"""
from __future__ import annotations

import csv
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..images import ImageBuffer, bicubic_resize
from ..metrics import psnr
from ..models import IrnModel, downscale, upscale
from .codec import lossy_decode, lossy_encode, stream_bits
from .crm import CrmModel, crm_restore

RD_HEADER = ["pipeline", "quality", "bpp", "psnr_db"]


@dataclass
class RdPoint:
    pipeline: str
    quality: int | None
    bpp: float
    psnr_db: float

    def __post_init__(self):
        if not self.bpp > 0:
            raise ValueError(f"bpp must be positive, got {self.bpp}")


@dataclass(frozen=True)
class Pipeline:
    down: str
    store: str
    crm: bool
    up: str

    @classmethod
    def parse(cls, text: str) -> "Pipeline":
        parts = text.lower().split("+")
        crm = "crm" in parts
        parts = [p for p in parts if p != "crm"]
        if len(parts) != 3:
            raise ValueError(f"pipeline must look like down+store[+crm]+up, got {text!r}")
        down, store, up = parts
        if down not in ("bicubic", "irn") or up not in ("bicubic", "irn"):
            raise ValueError(f"rescalers must be 'bicubic' or 'irn' in {text!r}")
        if store not in ("none", "png", "lossy"):
            raise ValueError(f"storage must be none, png or lossy in {text!r}")
        if crm and store != "lossy":
            raise ValueError("a CRM only applies after lossy storage")
        return cls(down, store, crm, up)

    @property
    def tag(self) -> str:
        return "+".join([self.down, self.store] + (["crm"] if self.crm else []) + [self.up])


def _png_bits(img: ImageBuffer) -> int:
    from ..images import save_png
    with tempfile.TemporaryDirectory() as tmp:
        return 8 * save_png(img, Path(tmp) / "lr.png")


def run_pipeline(p: Pipeline, img: ImageBuffer, scale: int, quality: int | None = None,
                 model: IrnModel | None = None, crm: CrmModel | None = None,
                 z_mode: str = "sample", seed: int = 0) -> tuple[ImageBuffer, float]:
    """Reconstruction of ``img`` and the storage cost in bits per HR pixel."""
    if (p.down == "irn" or p.up == "irn") and model is None:
        raise FileNotFoundError(f"pipeline {p.tag} needs an IRN checkpoint")
    if p.crm and crm is None:
        raise FileNotFoundError(f"pipeline {p.tag} needs a CRM checkpoint")
    hr = (img.height, img.width)
    lr_size = (img.height // scale, img.width // scale)
    if p.down == "irn":
        lr, _ = downscale(model, img)
    else:
        lr = bicubic_resize(img, size=lr_size)
    if p.store == "none":
        bits, stored = 8.0 * lr.data.size, lr
    elif p.store == "png":
        bits, stored = float(_png_bits(lr)), lr
    else:
        if quality is None:
            raise ValueError("lossy storage needs a quality")
        stream, _ = lossy_encode(lr, quality)
        bits, stored = stream_bits(stream), lossy_decode(stream)
        if p.crm:
            stored = crm_restore(crm, stored, quality)
    if p.up == "irn":
        rec = upscale(model, stored, z_mode, seed)
    else:
        rec = bicubic_resize(stored, size=hr)
    return rec, bits / (hr[0] * hr[1])


def rd_eval(pipeline: str | Pipeline, images, qualities=(), scale: int = 2, model: IrnModel | None = None,
            crm: CrmModel | None = None, csv_path=None, channel_mode: str = "rgb") -> list[RdPoint]:
    """Average (bpp, PSNR) over ``images`` per quality; non-lossy pipelines ignore the quality list
    and yield a single point unless the list is empty."""
    p = pipeline if isinstance(pipeline, Pipeline) else Pipeline.parse(pipeline)
    qualities = list(qualities)
    points = []
    settings = qualities if p.store == "lossy" else ([None] if qualities else [])
    for q in settings:
        bpps, psnrs = [], []
        for img in images:
            rec, bpp = run_pipeline(p, img, scale, q, model, crm)
            bpps.append(bpp)
            psnrs.append(psnr(img, rec, channel_mode))
        points.append(RdPoint(p.tag, q, float(np.mean(bpps)), float(np.mean(psnrs))))
    if csv_path is not None:
        write_rd_csv(csv_path, points)
    return points


def write_rd_csv(path, points, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(RD_HEADER)
        for pt in points:
            w.writerow([pt.pipeline, "" if pt.quality is None else pt.quality, f"{pt.bpp:.6f}", f"{pt.psnr_db:.4f}"])
