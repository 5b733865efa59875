"""Invertible building blocks.

Every stage maps an (N, H, W, C) tensor to another tensor and exposes
``forward`` and ``inverse``; the product of all stages is a bijection.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .images import _RGB2YCC, _YCC2RGB, _YCC_OFFSET, round_half_away
from .nn import Conv2d, Module
from .tensor import ShapeError, Tensor

DET_THRESHOLD = 1e-8


class SingularMatrixError(FloatingPointError):
    pass


class NonFiniteActivation(FloatingPointError):
    pass


# --- Haar --------------------------------------------------------------------

def _haar_np(x: np.ndarray) -> np.ndarray:
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    c = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    return 0.25 * np.concatenate([a + b + c + d, a - b + c - d, a + b - c - d, a - b - c + d], axis=3)


def _unhaar_np(x: np.ndarray) -> np.ndarray:
    n, h, w, c4 = x.shape
    c = c4 // 4
    ll, hl, lh, hh = x[..., :c], x[..., c:2 * c], x[..., 2 * c:3 * c], x[..., 3 * c:]
    out = np.empty((n, 2 * h, 2 * w, c), dtype=x.dtype)
    out[:, 0::2, 0::2] = ll + hl + lh + hh
    out[:, 0::2, 1::2] = ll - hl + lh - hh
    out[:, 1::2, 0::2] = ll + hl - lh - hh
    out[:, 1::2, 1::2] = ll - hl - lh + hh
    return out


def haar_forward(x: Tensor) -> Tensor:
    """(N, H, W, C) -> (N, H/2, W/2, 4C) with channel groups [LL | HL | LH | HH].

    For a 2x2 block [[a, b], [c, d]]: LL is the block mean, HL = (a-b+c-d)/4,
    LH = (a+b-c-d)/4, HH = (a-b-c+d)/4.
    """
    _, h, w, _ = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"Haar transform needs even height and width, got {x.shape}")
    return T.custom_op(_haar_np(x.data), (x,), lambda g: (0.25 * _unhaar_np(g),))


def haar_inverse(x: Tensor) -> Tensor:
    if x.shape[3] % 4:
        raise ShapeError(f"Haar inverse needs a multiple of 4 channels, got {x.shape}")
    return T.custom_op(_unhaar_np(x.data), (x,), lambda g: (4.0 * _haar_np(g),))


class HaarStage(Module):
    def forward(self, x: Tensor) -> Tensor:
        return haar_forward(x)

    def inverse(self, x: Tensor) -> Tensor:
        return haar_inverse(x)

    def out_channels(self, c: int) -> int:
        return 4 * c


# --- squeeze -----------------------------------------------------------------

def _squeeze_np(x: np.ndarray, n: int) -> np.ndarray:
    b, h, w, c = x.shape
    t = x.reshape(b, h // n, n, w // n, n, c).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(t).reshape(b, h // n, w // n, c * n * n)


def _unsqueeze_np(x: np.ndarray, n: int) -> np.ndarray:
    b, h, w, cn = x.shape
    c = cn // (n * n)
    t = x.reshape(b, h, w, c, n, n).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(t).reshape(b, h * n, w * n, c)


def squeeze(x: Tensor, n: int) -> Tensor:
    """Space-to-channel: output channel ``c * n*n + i * n + j`` holds pixel (i, j)
    of the n x n cell of source channel ``c``."""
    _, h, w, _ = x.shape
    if h % n or w % n:
        raise ShapeError(f"squeeze by {n} needs dimensions divisible by {n}, got {x.shape}")
    return T.custom_op(_squeeze_np(x.data, n), (x,), lambda g: (_unsqueeze_np(g, n),))


def unsqueeze(x: Tensor, n: int) -> Tensor:
    if x.shape[3] % (n * n):
        raise ShapeError(f"unsqueeze by {n} needs channels divisible by {n * n}, got {x.shape}")
    return T.custom_op(_unsqueeze_np(x.data, n), (x,), lambda g: (_squeeze_np(g, n),))


# --- 1x1 invertible convolution ----------------------------------------------

def invconv_init(channels: int, n: int) -> np.ndarray:
    """Averaging-prior initial matrix for a squeezed tensor of ``channels`` source
    channels and cell size ``n``.

    Output rows 0..C-1 are per-source-channel means of the n*n cell; the remaining
    rows copy cell elements 1..n*n-1, grouped by element then by source channel
    (the same grouping Haar uses for its high bands). For C = 1 this is the
    average row followed by unit vectors e_1, e_2, ...
    """
    k = n * n
    dim = channels * k
    w = np.zeros((dim, dim))
    for c in range(channels):
        w[c, c * k:(c + 1) * k] = 1.0 / k
    row = channels
    for e in range(1, k):
        for c in range(channels):
            w[row, c * k + e] = 1.0
            row += 1
    return w


class InvConv1x1(Module):
    """Per-pixel multiplication by a learned square matrix."""

    def __init__(self, weight: np.ndarray):
        self.weight = Tensor(weight, requires_grad=True)
        self.check()

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def determinant(self) -> float:
        return float(np.linalg.det(self.weight.data.astype(np.float64)))

    def check(self) -> None:
        det = self.determinant()
        if not np.isfinite(det) or abs(det) <= DET_THRESHOLD:
            raise SingularMatrixError(
                f"1x1 convolution matrix is near-singular: |det W| = {abs(det):.3e} "
                f"(threshold {DET_THRESHOLD:g}), max|W| = {np.abs(self.weight.data).max():.3e}")

    def _apply(self, x: Tensor, mat: Tensor) -> Tensor:
        if x.shape[3] != self.dim:
            raise ShapeError(f"1x1 convolution expects {self.dim} channels, got {x.shape}")
        kernel = T.reshape(T.transpose(mat, (1, 0)), (1, 1, self.dim, self.dim))
        return T.conv2d(x, kernel)

    def forward(self, x: Tensor) -> Tensor:
        return self._apply(x, self.weight)

    def inverse(self, x: Tensor) -> Tensor:
        self.check()
        return self._apply(x, T.inverse(self.weight))


class LearnableDownsampling(Module):
    """Squeeze by ``n`` followed by a 1x1 invertible convolution."""

    def __init__(self, channels: int, n: int):
        self.n = n
        self.conv = InvConv1x1(invconv_init(channels, n))

    def forward(self, x: Tensor) -> Tensor:
        return self.conv.forward(squeeze(x, self.n))

    def inverse(self, x: Tensor) -> Tensor:
        return unsqueeze(self.conv.inverse(x), self.n)

    def out_channels(self, c: int) -> int:
        return c * self.n * self.n


# --- colour ------------------------------------------------------------------

class ColorTransform(Module):
    """Fixed RGB -> (Y, Cb - 128/255, Cr - 128/255) affine map (BT.601 studio swing).

    Chroma is re-centred on zero so that a zero latent means neutral colour.
    """

    _offset = _YCC_OFFSET * np.array([1.0, 0.0, 0.0])

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[3] != 3:
            raise ShapeError(f"colour transform needs 3 channels, got {x.shape}")
        kernel = Tensor(_RGB2YCC.T.reshape(1, 1, 3, 3))
        return T.conv2d(x, kernel, Tensor(self._offset))

    def inverse(self, x: Tensor) -> Tensor:
        kernel = Tensor(_YCC2RGB.T.reshape(1, 1, 3, 3))
        return T.conv2d(x, kernel, Tensor(-(_YCC2RGB @ self._offset)))

    def out_channels(self, c: int) -> int:
        return c


# --- coupling ----------------------------------------------------------------

class DenseBlock(Module):
    """Five 3x3 convolutions with dense connections.

    conv1 lifts the input to ``features`` channels; conv2..conv4 each add
    ``growth`` channels to the running concatenation; conv5 maps everything
    to ``cout`` and starts at zero, so a fresh block outputs zeros.
    """

    def __init__(self, cin: int, cout: int, features: int, growth: int, rng: np.random.Generator,
                 init_scale: float = 0.1):
        f, g = features, growth
        self.conv1 = Conv2d(cin, f, rng=rng, init_scale=init_scale)
        self.conv2 = Conv2d(f, g, rng=rng, init_scale=init_scale)
        self.conv3 = Conv2d(f + g, g, rng=rng, init_scale=init_scale)
        self.conv4 = Conv2d(f + 2 * g, g, rng=rng, init_scale=init_scale)
        self.conv5 = Conv2d(f + 3 * g, cout, rng=rng, init_scale=0.0)
        self.cout = cout

    def __call__(self, x: Tensor) -> Tensor:
        h0 = T.leaky_relu(self.conv1(x))
        h1 = T.leaky_relu(self.conv2(h0))
        c1 = T.concat([h0, h1])
        h2 = T.leaky_relu(self.conv3(c1))
        c2 = T.concat([c1, h2])
        h3 = T.leaky_relu(self.conv4(c2))
        return self.conv5(T.concat([c2, h3]))


class InvBlock(Module):
    """Additive coupling on the low branch, bounded affine coupling on the high branch.

    forward:  h1' = h1 + phi(h2);  h2' = h2 * exp(s(h1')) + eta(h1')
    with s(.) = clamp * (2 sigmoid(rho(.)) - 1), so |s| <= clamp.
    """

    def __init__(self, c_low: int, c_high: int, features: int, growth: int,
                 rng: np.random.Generator, clamp: float = 1.0, index: int = 0):
        self.c_low, self.c_high = c_low, c_high
        self.clamp = clamp
        self.index = index
        self.phi = DenseBlock(c_high, c_low, features, growth, rng)
        self.eta = DenseBlock(c_low, c_high, features, growth, rng)
        self.rho = DenseBlock(c_low, c_high, features, growth, rng)

    def out_channels(self, c: int) -> int:
        return c

    def log_scale(self, h1: Tensor) -> Tensor:
        return T.mul(T.sub(T.mul(T.sigmoid(self.rho(h1)), 2.0), 1.0), self.clamp)

    def _split(self, x: Tensor):
        if x.shape[3] != self.c_low + self.c_high:
            raise ShapeError(f"InvBlock {self.index} expects {self.c_low}+{self.c_high} channels, got {x.shape}")
        return T.split(x, [self.c_low, self.c_high])

    def _finite(self, out: Tensor) -> Tensor:
        if not np.all(np.isfinite(out.data)):
            raise NonFiniteActivation(f"non-finite activation in InvBlock {self.index}")
        return out

    def forward(self, x: Tensor) -> Tensor:
        h1, h2 = self._split(x)
        y1 = T.add(h1, self.phi(h2))
        y2 = T.add(T.mul(h2, T.exp(self.log_scale(y1))), self.eta(y1))
        return self._finite(T.concat([y1, y2]))

    def inverse(self, x: Tensor) -> Tensor:
        y1, y2 = self._split(x)
        h2 = T.mul(T.sub(y2, self.eta(y1)), T.exp(T.mul(self.log_scale(y1), -1.0)))
        h1 = T.sub(y1, self.phi(h2))
        return self._finite(T.concat([h1, h2]))


# --- quantization ------------------------------------------------------------

def quantize_np(x: np.ndarray) -> np.ndarray:
    return round_half_away(np.clip(x, 0.0, 1.0) * 255.0) / 255.0


def quantize(x: Tensor) -> Tensor:
    """Round to the 8-bit grid {0, 1/255, ..., 1}; identity gradient (straight-through)."""
    return T.straight_through(x, quantize_np)
