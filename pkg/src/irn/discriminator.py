"""Convolutional critic T(x) for the adversarial stage."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Linear, Module
from .tensor import ShapeError, Tensor


class Discriminator(Module):
    """Eight 3x3 convolutions (width doubling every two layers, stride 2 on every
    second layer) followed by two dense layers with ``hidden`` units.

    ``width=64`` gives the 64 -> 512 channel progression; smaller widths keep
    the same shape at desk scale. Built for a fixed ``crop`` size.
    """

    def __init__(self, crop: int, rng: np.random.Generator, width: int = 64, hidden: int = 100,
                 channels: int = 3):
        if crop % 16:
            raise ShapeError(f"discriminator crop must be divisible by 16, got {crop}")
        self.crop = crop
        self.channels = channels
        convs = []
        cin = channels
        for i in range(8):
            cout = width * 2 ** (i // 2)
            convs.append(Conv2d(cin, cout, stride=2 if i % 2 else 1, padding=1, rng=rng))
            cin = cout
        self.convs = convs
        side = crop // 16
        self.fc1 = Linear(cin * side * side, hidden, rng)
        self.fc2 = Linear(hidden, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1:] != (self.crop, self.crop, self.channels):
            raise ShapeError(f"discriminator built for {self.crop}x{self.crop}x{self.channels}, got {x.shape}")
        h = x
        for conv in self.convs:
            h = T.leaky_relu(conv(h))
        h = T.reshape(h, (h.shape[0], -1))
        h = T.leaky_relu(self.fc1(h))
        return T.reshape(self.fc2(h), (h.shape[0],))
