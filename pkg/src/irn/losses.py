"""Reconstruction, guidance, latent cross-entropy and JS/discriminator losses.

``reduction="mean"`` averages over every element; ``reduction="sum"`` sums
over each image and averages over the batch (the scale under which the
default weights lambda1=1, lambda2=s^2, lambda3=1 balance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .rng import LOG_2PI
from .tensor import ShapeError, Tensor

METRICS = ("L1", "L2")
LOG2 = math.log(2.0)


@dataclass
class LossWeights:
    lambda1: float = 1.0  # reconstruction
    lambda2: float = 4.0  # guidance (s^2)
    lambda3: float = 1.0  # distribution matching
    lambda4: float = 0.0  # perceptual term; not implemented, must stay 0
    metric_x: str = "L1"
    metric_y: str = "L2"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lambda4 != 0:
            raise ValueError("the perceptual loss is not available; lambda4 must be 0")
        for m in (self.metric_x, self.metric_y):
            if m not in METRICS:
                raise ValueError(f"metric must be one of {METRICS}, got {m!r}")

    @classmethod
    def for_scale(cls, s: int, stage: int = 1) -> "LossWeights":
        return cls(lambda1=1.0 if stage == 1 else 0.01, lambda2=float(s * s), lambda3=1.0)


def _reduce(per_elem: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return T.mean(per_elem)
    if reduction == "sum":
        return T.mul(T.sum(per_elem), 1.0 / per_elem.shape[0])
    raise ValueError(f"unknown reduction {reduction!r}")


def _difference(a: Tensor, b: Tensor, metric: str, reduction: str) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"loss operands differ in shape: {a.shape} vs {b.shape}")
    d = T.sub(a, b)
    if metric == "L1":
        return _reduce(T.absolute(d), reduction)
    if metric == "L2":
        return _reduce(T.square(d), reduction)
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


def loss_recon(x: Tensor, x_hat: Tensor, metric: str = "L1", reduction: str = "mean") -> Tensor:
    return _difference(x_hat, x, metric, reduction)


def loss_guide(y_model: Tensor, y_guide: Tensor, metric: str = "L2", reduction: str = "mean") -> Tensor:
    return _difference(y_model, y_guide, metric, reduction)


def loss_ce_z(z: Tensor) -> Tensor:
    """-log N(z; 0, I) per sample, averaged over the batch: (|z|^2 + K ln 2pi) / 2."""
    if not np.all(np.isfinite(z.data)):
        raise FloatingPointError("non-finite latent z")
    n = z.shape[0]
    k = z.size // n
    return T.mul(T.add(T.mul(T.sum(T.square(z)), 1.0 / n), k * LOG_2PI), 0.5)


def js_estimate(t_real: Tensor, t_fake: Tensor) -> Tensor:
    """1/2 [mean log sigmoid(T(x)) + mean log(1 - sigmoid(T(x')))] + log 2.

    The log 2 is folded in per element, so a critic that is identically zero
    gives exactly 0.
    """
    real = T.mean(T.add(T.log_sigmoid(t_real), LOG2))
    fake = T.mean(T.add(T.log_sigmoid(T.mul(t_fake, -1.0)), LOG2))
    return T.mul(T.add(real, fake), 0.5)


def discriminator_loss(t_real: Tensor, t_fake: Tensor) -> Tensor:
    """Binary cross-entropy the discriminator minimises (= -2 (JS estimate - log 2))."""
    real = T.mean(T.log_sigmoid(t_real))
    fake = T.mean(T.log_sigmoid(T.mul(t_fake, -1.0)))
    return T.mul(T.add(real, fake), -1.0)


def generator_loss(t_fake: Tensor) -> Tensor:
    """Non-saturating generator objective -log sigmoid(T(x'))."""
    return T.mul(T.mean(T.log_sigmoid(t_fake)), -1.0)


def loss_distr_js(x_real: Tensor, x_fake: Tensor, discriminator) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (generator loss, discriminator loss, JS estimate) for one batch pair."""
    if x_real.shape != x_fake.shape:
        raise ShapeError(f"real and generated batches differ: {x_real.shape} vs {x_fake.shape}")
    t_real = discriminator(x_real)
    t_fake = discriminator(x_fake)
    return generator_loss(t_fake), discriminator_loss(t_real, t_fake), js_estimate(t_real, t_fake)
