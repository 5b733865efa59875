import numpy as np
import pytest

from irn import tensor as T
from irn.images import ImageBuffer
from irn.models import (BuildError, ModelConfig, build_model, downscale, draw_z, fractional_sizes, integer_scale,
                        rescale_fractional, roundtrip_float, upscale)
from irn.tensor import Tensor


def perturbed(cfg: ModelConfig, amount=0.05):
    model = build_model(cfg)
    rng = np.random.default_rng(cfg.seed + 100)
    for p in model.parameters():
        p.data = p.data + amount * rng.standard_normal(p.shape)
    return model


@pytest.mark.parametrize("variant,scale,channels", [
    ("IRN", 2, (3, 9)), ("IRN", 4, (3, 45)), ("IRN_E", 4, (3, 45)), ("IRN_LD", 3, (3, 24)), ("IRN_color", 1, (1, 2)),
])
def test_latent_shapes(variant, scale, channels):
    model = build_model(ModelConfig(variant, scale, 1, 4, 4))
    assert (model.latent.y_channels, model.latent.z_channels) == channels
    h = 12 if scale != 3 else 9
    y, z = model.split(model.forward(Tensor(np.zeros((1, h, h, 3)))))
    assert y.shape == (1, h // max(scale, 1), h // max(scale, 1), channels[0])
    assert z.shape[3] == channels[1]


@pytest.mark.parametrize("cfg", [ModelConfig("IRN", 3), ModelConfig("IRN_E", 6), ModelConfig("bogus"),
                                 ModelConfig("IRN", 2, blocks=0)])
def test_build_errors(cfg):
    with pytest.raises(BuildError):
        build_model(cfg)


def test_zero_init_model_is_haar_and_exactly_invertible():
    model = build_model(ModelConfig("IRN", 2, 2, 4, 4))
    x = np.random.default_rng(0).uniform(size=(1, 8, 8, 3))
    y, _ = model.split(model.forward(Tensor(x)))
    np.testing.assert_allclose(y.data[0, 0, 0], x[0, :2, :2].mean(axis=(0, 1)), atol=1e-6)


def test_roundtrip_float64_precision():
    with T.precision("float64"):
        model = perturbed(ModelConfig("IRN", 4, 2, 4, 4, seed=1))
        x = np.random.default_rng(0).uniform(size=(2, 8, 8, 3))
        assert np.abs(roundtrip_float(model, x, quantize_y=False) - x).max() < 1e-12


def test_product_path_shapes_and_modes():
    model = perturbed(ModelConfig("IRN", 2, 1, 4, 4))
    img = ImageBuffer(np.random.default_rng(0).integers(0, 256, (16, 12, 3), dtype=np.uint8))
    y, z = downscale(model, img)
    assert (y.height, y.width, z.shape) == (8, 6, (8, 6, 9))
    a = upscale(model, y, "sample", seed=7)
    assert a == upscale(model, y, "sample", seed=7)
    assert a != upscale(model, y, "sample", seed=8)
    assert (upscale(model, y, "zero").height, upscale(model, y, "zero").width) == (16, 12)
    exact = upscale(model, y, "given", z=z)
    assert exact.data.shape == img.data.shape


def test_draw_z_errors():
    model = build_model(ModelConfig("IRN", 2, 1, 4, 4))
    with pytest.raises(ValueError):
        draw_z(model, (4, 4), "given", z=np.zeros((3, 3, 9)))
    with pytest.raises(ValueError):
        draw_z(model, (4, 4), "bogus")


def test_indivisible_image_rejected():
    model = build_model(ModelConfig("IRN", 2, 1, 4, 4))
    with pytest.raises(ValueError, match="divisible"):
        downscale(model, ImageBuffer(np.zeros((9, 8, 3), np.uint8)))


def test_fractional_scale():
    assert integer_scale(2.5) == 3 and integer_scale(1.4) == 1 and integer_scale(3.3) == 3
    assert fractional_sizes(30, 30, 2.5) == ((12, 12), (36, 36))
    model = build_model(ModelConfig("IRN_LD", 3, 1, 4, 4))
    img = ImageBuffer(np.random.default_rng(0).integers(0, 256, (30, 30, 3), dtype=np.uint8))
    y, x_hat = rescale_fractional(model, img, 2.5)
    assert (y.height, y.width) == (12, 12)
    assert x_hat.data.shape == img.data.shape
    with pytest.raises(ValueError):
        rescale_fractional(build_model(ModelConfig("IRN", 2, 1, 4, 4)), img, 2.5)
