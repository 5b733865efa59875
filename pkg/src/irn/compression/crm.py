"""Compression Restore Module: an RRDB network that cleans decoded LR images."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..checkpoint import Checkpoint
from ..images import ImageBuffer, to_uint8
from ..layers import DenseBlock
from ..nn import Conv2d, Module
from ..optim import Adam, halving_lr
from ..rng import make_rng, rng_state_json
from ..tensor import Tensor
from .codec import LossyCodec

log = logging.getLogger(__name__)


class ResidualDenseBlock(Module):
    def __init__(self, features: int, growth: int, rng, res_scale: float):
        self.body = DenseBlock(features, features, growth, growth, rng)
        self.res_scale = res_scale

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(x, T.mul(self.body(x), self.res_scale))


class RRDB(Module):
    """Three residual dense blocks inside an outer scaled residual."""

    def __init__(self, features: int, growth: int, rng, res_scale: float = 0.2):
        self.rdbs = [ResidualDenseBlock(features, growth, rng, res_scale) for _ in range(3)]
        self.res_scale = res_scale

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for rdb in self.rdbs:
            h = rdb(h)
        return T.add(x, T.mul(h, self.res_scale))


class CrmModel(Module):
    """conv -> RRDB trunk -> conv, plus a global residual; starts as the identity map."""

    def __init__(self, blocks: int = 2, features: int = 32, growth: int = 16, seed: int = 0,
                 quality: int | None = None, res_scale: float = 0.2, channels: int = 3):
        rng = make_rng(seed)
        self.config = {"blocks": blocks, "features": features, "growth": growth, "seed": seed,
                       "channels": channels}
        self.quality = quality
        self.conv_first = Conv2d(channels, features, rng=rng)
        self.trunk = [RRDB(features, growth, rng, res_scale) for _ in range(blocks)]
        self.conv_body = Conv2d(features, features, rng=rng, init_scale=0.1)
        self.conv_last = Conv2d(features, channels, rng=rng, init_scale=0.0)
        self.res_scale = res_scale

    def set_res_scale(self, value: float) -> None:
        self.res_scale = value
        for rrdb in self.trunk:
            rrdb.res_scale = value
            for rdb in rrdb.rdbs:
                rdb.res_scale = value

    def __call__(self, x: Tensor) -> Tensor:
        feat = self.conv_first(x)
        h = feat
        for block in self.trunk:
            h = block(h)
        h = T.add(feat, T.mul(self.conv_body(h), self.res_scale))
        return T.add(x, T.mul(self.conv_last(T.leaky_relu(h)), self.res_scale))

    def restore_float(self, x: np.ndarray) -> np.ndarray:
        with T.no_grad():
            return self(Tensor(x[None])).data[0].astype(np.float64)


def crm_restore(crm: CrmModel, img: ImageBuffer, quality: int | None = None) -> ImageBuffer:
    """Restore a decoded LR image; warns (and proceeds) if ``quality`` differs from the CRM's."""
    if quality is not None and crm.quality is not None and quality != crm.quality:
        warnings.warn(f"CRM trained for q={crm.quality} applied at q={quality}", RuntimeWarning, stacklevel=2)
    return ImageBuffer(to_uint8(crm.restore_float(img.to_float())), img.colorspace)


@dataclass
class CrmTrainConfig:
    quality: int = 30
    blocks: int = 2
    features: int = 32
    growth: int = 16
    iters: int = 400
    batch: int = 8
    crop: int = 24
    lr: float = 1e-3
    milestones: tuple[int, ...] = (250, 350)
    seed: int = 0
    log_every: int = 10


def make_pairs(lr_images, quality: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(decoded, clean) float pairs; ``lr_images`` are the rescaler's 8-bit LR outputs."""
    codec = LossyCodec(quality)
    return [(codec(img)[0].to_float(), img.to_float()) for img in lr_images]


def _sample(pairs, cfg: CrmTrainConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for _ in range(cfg.batch):
        deg, clean = pairs[int(rng.integers(len(pairs)))]
        h, w = clean.shape[:2]
        c = min(cfg.crop, h, w)
        top, left = int(rng.integers(h - c + 1)), int(rng.integers(w - c + 1))
        d, t = deg[top:top + c, left:left + c], clean[top:top + c, left:left + c]
        if rng.random() < 0.5:
            d, t = d[:, ::-1], t[:, ::-1]
        xs.append(np.ascontiguousarray(d))
        ys.append(np.ascontiguousarray(t))
    return np.stack(xs), np.stack(ys)


def crm_loss(crm: CrmModel, degraded: np.ndarray, clean: np.ndarray) -> Tensor:
    diff = T.sub(crm(Tensor(degraded)), Tensor(clean))
    return T.mean(T.square(diff))


def train_crm(lr_images, cfg: CrmTrainConfig | None = None, log_path=None) -> tuple[CrmModel, list[dict]]:
    """Fit a CRM with an L2 loss on (codec(LR), LR) pairs at one quality."""
    cfg = cfg or CrmTrainConfig()
    pairs = make_pairs(lr_images, cfg.quality)
    crm = CrmModel(cfg.blocks, cfg.features, cfg.growth, cfg.seed, cfg.quality)
    opt = Adam(crm.named_parameters(), lr=cfg.lr)
    rng = make_rng(cfg.seed + 1)
    history = []
    for it in range(cfg.iters):
        opt.lr = halving_lr(cfg.lr, cfg.milestones, it)
        x, y = _sample(pairs, cfg, rng)
        loss = crm_loss(crm, x, y)
        if not np.isfinite(loss.item()):
            raise FloatingPointError(f"non-finite CRM loss at iteration {it}")
        opt.zero_grad()
        T.backward(loss)
        opt.step()
        if it == 0 or (it + 1) % cfg.log_every == 0:
            history.append({"iter": it + 1, "loss": loss.item(), "lr": opt.lr})
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "loss", "lr"])
            for row in history:
                w.writerow([row["iter"], repr(row["loss"]), repr(row["lr"])])
    crm.rng_state = rng_state_json(rng)
    return crm, history


def pairs_loss(crm: CrmModel, pairs) -> float:
    """Mean squared error over whole images (identity CRM gives the codec's own error)."""
    vals = [float(np.mean((crm.restore_float(d) - c) ** 2)) for d, c in pairs]
    return float(np.mean(vals))


def crm_checkpoint(crm: CrmModel) -> Checkpoint:
    cfg = {k: str(v) for k, v in crm.config.items()}
    cfg["quality"] = "none" if crm.quality is None else str(crm.quality)
    cfg["res_scale"] = repr(crm.res_scale)
    tensors = {"crm." + k: v.data.copy() for k, v in crm.named_parameters().items()}
    return Checkpoint("CRM", 1, cfg, tensors, {}, getattr(crm, "rng_state", "{}"))


def crm_from_checkpoint(ck: Checkpoint) -> CrmModel:
    if ck.variant != "CRM":
        raise ValueError(f"checkpoint holds a {ck.variant} model, not a CRM")
    c = ck.config
    q = None if c.get("quality", "none") == "none" else int(c["quality"])
    crm = CrmModel(int(c["blocks"]), int(c["features"]), int(c["growth"]), int(c["seed"]), q,
                   float(c.get("res_scale", 0.2)), int(c.get("channels", 3)))
    crm.load_state_dict(ck.params("crm."))
    return crm
