"""Invertible image rescaling on a small numpy autodiff engine."""
from .images import ImageBuffer, bicubic_resize, load_png, save_png
from .metrics import psnr, ssim
from .models import IrnModel, ModelConfig, build_model, downscale, roundtrip, upscale

__version__ = "0.1.0"

__all__ = ["ImageBuffer", "load_png", "save_png", "bicubic_resize", "psnr", "ssim", "IrnModel", "ModelConfig",
           "build_model", "downscale", "upscale", "roundtrip", "__version__"]
