"""Tour of the exactly invertible building blocks.

Run:  python3 demos/01_invertible_pieces.py

Nothing is trained here. The script pushes a toy image through a Haar stage,
a coupling block and a full rescaling model, and prints how far the inverse
lands from the input.
"""
import numpy as np

from irn import tensor as T
from irn.data import toy_image
from irn.layers import InvBlock, haar_forward, haar_inverse
from irn.models import ModelConfig, build_model
from irn.rng import make_rng
from irn.tensor import Tensor

img = toy_image(np.random.default_rng(0), 32)

with T.precision("float64"), T.no_grad():
    x = Tensor(img.to_float()[None].astype(np.float64))

    # A Haar stage maps every 2x2 cell to one mean and three detail bands.
    bands = haar_forward(x)
    ll = bands.data[..., :3]
    print(f"Haar: {x.shape} -> {bands.shape}; LL band equals the 2x2 mean: "
          f"{np.allclose(ll, x.data.reshape(1, 16, 2, 16, 2, 3).mean(axis=(2, 4)))}")
    print(f"      detail energy {np.square(bands.data[..., 3:]).mean():.2e}, "
          f"inverse error {np.abs(haar_inverse(bands).data - x.data).max():.1e}")

    # A coupling block: whatever its sub-networks compute, the inverse undoes it.
    block = InvBlock(3, 9, features=8, growth=4, rng=make_rng(1))
    for p in block.parameters():
        p.data = p.data + 0.2 * np.random.default_rng(2).standard_normal(p.shape)
    out = block.forward(bands)
    back = block.inverse(out)
    print(f"InvBlock: changed the input by {np.abs(out.data - bands.data).max():.3f}, "
          f"inverse error {np.abs(back.data - bands.data).max():.1e}")

    # Whole models, one per variant.
    for variant, scale in [("IRN", 2), ("IRN", 4), ("IRN_E", 4), ("IRN_LD", 2), ("IRN_color", 1)]:
        model = build_model(ModelConfig(variant=variant, scale=scale, blocks=2, features=8, growth=4))
        y, z = model.split(model.forward(x))
        rec = model.inverse(model.join(y, z))
        print(f"{variant:9s} x{scale}: y {y.shape[1:]}, z {z.shape[1:]}, "
              f"max |x - f^-1(f(x))| = {np.abs(rec.data - x.data).max():.1e}")
