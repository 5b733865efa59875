"""IRN variants, downscaling/upscaling procedures and the fractional-scale wrapper."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import tensor as T
from .images import ImageBuffer, bicubic_resize_float, output_size, to_uint8
from .layers import ColorTransform, HaarStage, InvBlock, InvConv1x1, LearnableDownsampling, quantize
from .nn import Module
from .rng import make_rng
from .tensor import Tensor

VARIANTS = ("IRN", "IRN_E", "IRN_LD", "IRN_color")


class BuildError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "IRN"
    scale: int = 2
    blocks: int = 8  # InvBlocks per downscaling module (IRN) or in total (other variants)
    features: int = 32
    growth: int = 16
    clamp: float = 1.0
    channels: int = 3
    seed: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentSpec:
    y_channels: int
    z_channels: int
    factor: int  # spatial reduction

    def y_shape(self, h: int, w: int) -> tuple[int, int, int]:
        return (h // self.factor, w // self.factor, self.y_channels)

    def z_shape(self, h: int, w: int) -> tuple[int, int, int]:
        """z shape for an HR input of size h x w."""
        return (h // self.factor, w // self.factor, self.z_channels)


@dataclass
class IrnModel(Module):
    config: ModelConfig
    stages: list = field(default_factory=list)
    latent: LatentSpec | None = None

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def scale(self) -> int:
        return self.latent.factor

    def forward(self, x: Tensor) -> Tensor:
        for stage in self.stages:
            x = stage.forward(x)
        return x

    def inverse(self, out: Tensor) -> Tensor:
        for stage in reversed(self.stages):
            out = stage.inverse(out)
        return out

    def split(self, out: Tensor) -> tuple[Tensor, Tensor]:
        return tuple(T.split(out, [self.latent.y_channels, self.latent.z_channels]))

    def join(self, y: Tensor, z: Tensor) -> Tensor:
        return T.concat([y, z])

    def invconvs(self) -> list[InvConv1x1]:
        return [s.conv for s in self.stages if isinstance(s, LearnableDownsampling)]

    def check_invertible(self) -> None:
        for conv in self.invconvs():
            conv.check()

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for i, stage in enumerate(self.stages):
            out.update(stage.named_parameters(f"{prefix}stages.{i}."))
        return out


def _is_pow2(s: int) -> bool:
    return s >= 2 and (s & (s - 1)) == 0


def build_model(config: ModelConfig | dict) -> IrnModel:
    """Assemble the stage list for ``config.variant``.

    IRN: log2(s) x [Haar -> blocks InvBlocks]; IRN_E: all Haar stages, then
    ``blocks`` InvBlocks; IRN_LD: squeeze(s) -> 1x1 conv -> ``blocks`` InvBlocks;
    IRN_color: colour transform -> ``blocks`` InvBlocks on (Y | CbCr).
    """
    if isinstance(config, dict):
        config = ModelConfig(**config)
    v, s, c = config.variant, config.scale, config.channels
    if v not in VARIANTS:
        raise BuildError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    if config.blocks < 1:
        raise BuildError(f"blocks must be positive, got {config.blocks}")
    rng = make_rng(config.seed)
    stages: list = []
    idx = 0

    def blocks(n, c_low, c_total):
        nonlocal idx
        for _ in range(n):
            stages.append(InvBlock(c_low, c_total - c_low, config.features, config.growth,
                                   rng, clamp=config.clamp, index=idx))
            idx += 1

    if v in ("IRN", "IRN_E"):
        if not _is_pow2(s):
            raise BuildError(f"{v} needs a power-of-two scale, got {s}")
        modules = int(math.log2(s))
        ch = c
        if v == "IRN":
            for _ in range(modules):
                stages.append(HaarStage())
                ch *= 4
                blocks(config.blocks, c, ch)
        else:
            for _ in range(modules):
                stages.append(HaarStage())
                ch *= 4
            blocks(config.blocks, c, ch)
        latent = LatentSpec(c, ch - c, s)
    elif v == "IRN_LD":
        if s < 2:
            raise BuildError(f"IRN_LD needs an integer scale >= 2, got {s}")
        stages.append(LearnableDownsampling(c, s))
        ch = c * s * s
        blocks(config.blocks, c, ch)
        latent = LatentSpec(c, ch - c, s)
    else:
        if c != 3:
            raise BuildError("IRN_color needs 3-channel RGB input")
        stages.append(ColorTransform())
        blocks(config.blocks, 1, 3)
        latent = LatentSpec(1, 2, 1)

    total = c
    for stage in stages:
        total = stage.out_channels(total)
    f = latent.factor
    if latent.y_channels + latent.z_channels != total or total != c * f * f:
        raise BuildError(f"channel arithmetic inconsistent: y {latent.y_channels} + z {latent.z_channels} "
                         f"!= {c} x {f}^2")
    return IrnModel(config, stages, latent)


# --- product path --------------------------------------------------------------

def _batch(img: ImageBuffer) -> Tensor:
    return Tensor(img.to_float()[None])


def _check_divisible(model: IrnModel, h: int, w: int) -> None:
    f = model.latent.factor
    if h % f or w % f:
        raise ValueError(f"image size {h}x{w} is not divisible by scale {f}; "
                         f"use rescale_fractional or crop the image")


def downscale(model: IrnModel, x: ImageBuffer) -> tuple[ImageBuffer, np.ndarray]:
    """Forward pass: quantized 8-bit LR image plus the latent z (diagnostics only)."""
    _check_divisible(model, x.height, x.width)
    with T.no_grad():
        y, z = model.split(model.forward(_batch(x)))
    cs = "Grayscale" if model.latent.y_channels == 1 else x.colorspace
    return ImageBuffer(to_uint8(y.data[0]), cs), z.data[0].copy()


def draw_z(model: IrnModel, y_hw: tuple[int, int], mode: str = "sample", seed: int = 0,
           z: np.ndarray | None = None, batch: int | None = None) -> np.ndarray:
    """Latent for an LR image of size ``y_hw``: ``sample`` (N(0, I), seeded), ``zero`` or ``given``."""
    shape = (y_hw[0], y_hw[1], model.latent.z_channels)
    if batch is not None:
        shape = (batch,) + shape
    if mode == "sample":
        return make_rng(seed).standard_normal(shape)
    if mode == "zero":
        return np.zeros(shape)
    if mode == "given":
        if z is None or tuple(np.shape(z)) != shape:
            raise ValueError(f"given z has shape {None if z is None else np.shape(z)}, expected {shape}")
        return np.asarray(z, dtype=np.float64)
    raise ValueError(f"unknown z mode {mode!r}")


def upscale_float(model: IrnModel, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """f^-1 on a float (H, W, C) LR array and latent; returns float HR array."""
    with T.no_grad():
        x = model.inverse(model.join(Tensor(y[None]), Tensor(np.asarray(z)[None])))
    return x.data[0].astype(np.float64)


def upscale(model: IrnModel, y: ImageBuffer, z_mode: str = "sample", seed: int = 0,
            z: np.ndarray | None = None) -> ImageBuffer:
    """Inverse pass from an 8-bit LR image and a latent chosen by ``z_mode``."""
    if y.channels != model.latent.y_channels:
        raise ValueError(f"LR image has {y.channels} channels, model expects {model.latent.y_channels}")
    zz = draw_z(model, (y.height, y.width), z_mode, seed, z)
    x = upscale_float(model, y.to_float(), zz)
    return ImageBuffer(to_uint8(x), "RGB" if x.shape[2] == 3 else "Grayscale")


def roundtrip(model: IrnModel, x: ImageBuffer, z_mode: str = "sample", seed: int = 0) -> ImageBuffer:
    y, _ = downscale(model, x)
    return upscale(model, y, z_mode, seed)


def roundtrip_float(model: IrnModel, x: np.ndarray, quantize_y: bool = True) -> np.ndarray:
    """f^-1(f(x)) with the model's own z; exact up to float error when ``quantize_y`` is off."""
    with T.no_grad():
        out = model.forward(Tensor(x))
        y, z = model.split(out)
        if quantize_y:
            y = quantize(y)
        return model.inverse(model.join(y, z)).data


# --- fractional scales -------------------------------------------------------------

def integer_scale(s1) -> int:
    """Nearest integer scale, halves rounded up."""
    return int(math.floor(Fraction(s1) + Fraction(1, 2)))


def fractional_sizes(h: int, w: int, s1) -> tuple[tuple[int, int], tuple[int, int]]:
    """(LR size, size of the bicubic pre-resized HR fed to the integer model)."""
    s2 = integer_scale(s1)
    lr = (output_size(h, 1 / Fraction(s1)), output_size(w, 1 / Fraction(s1)))
    return lr, (lr[0] * s2, lr[1] * s2)


def fractional_downscale(model: IrnModel, x: ImageBuffer, s1) -> tuple[ImageBuffer, np.ndarray]:
    if Fraction(s1) <= 1:
        raise ValueError(f"fractional scale must exceed 1, got {s1}")
    s2 = integer_scale(s1)
    if s2 != model.scale:
        raise ValueError(f"scale {s1} needs a x{s2} model, got x{model.scale}")
    _, pre = fractional_sizes(x.height, x.width, s1)
    if pre != (x.height, x.width):
        x = ImageBuffer(to_uint8(bicubic_resize_float(x.to_float(), size=pre)), x.colorspace)
    return downscale(model, x)


def fractional_upscale(model: IrnModel, y: ImageBuffer, size: tuple[int, int], z_mode: str = "sample",
                       seed: int = 0, z: np.ndarray | None = None) -> ImageBuffer:
    zz = draw_z(model, (y.height, y.width), z_mode, seed, z)
    x = upscale_float(model, y.to_float(), zz)
    if x.shape[:2] != tuple(size):
        x = bicubic_resize_float(x, size=size)
    return ImageBuffer(to_uint8(x), "RGB" if x.shape[2] == 3 else "Grayscale")


def rescale_fractional(model: IrnModel, x: ImageBuffer, s1, z_mode: str = "sample",
                       seed: int = 0) -> tuple[ImageBuffer, ImageBuffer]:
    """bicubic(s2/s1) -> IRN(s2) down, then IRN^-1 -> bicubic(s1/s2) up; returns (y, x_hat)."""
    y, _ = fractional_downscale(model, x, s1)
    return y, fractional_upscale(model, y, (x.height, x.width), z_mode, seed)
