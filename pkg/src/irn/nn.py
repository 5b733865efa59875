"""Minimal parameter containers: Module, Conv2d, Linear."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Attribute-scanning parameter container.

    Parameters are :class:`Tensor` attributes with ``requires_grad``; children
    are Module attributes or lists of Modules. Names are dotted paths.
    """

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.data.dtype)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(arr: np.ndarray) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Conv2d(Module):
    """3x3 (or k x k) convolution, channels-last, Xavier-normal init times ``init_scale``.

    ``init_scale=0`` gives an all-zero layer.
    """

    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1,
                 padding: int | None = None, rng: np.random.Generator | None = None,
                 init_scale: float = 1.0, bias: bool = True):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        if init_scale == 0.0 or rng is None:
            w = np.zeros((kernel, kernel, cin, cout))
        else:
            std = np.sqrt(2.0 / (kernel * kernel * (cin + cout)))
            w = rng.standard_normal((kernel, kernel, cin, cout)) * std * init_scale
        self.weight = _param(w)
        self.bias = _param(np.zeros(cout)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng: np.random.Generator):
        std = np.sqrt(2.0 / (fin + fout))
        self.weight = _param(rng.standard_normal((fin, fout)) * std)
        self.bias = _param(np.zeros((1, fout)))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)
