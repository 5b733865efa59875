"""Seeded randomness and the standard-Gaussian latent prior.

All randomness goes through numpy's Philox-4x64 counter-based generator, whose
output stream is fixed by (key, counter) independent of platform. Generator
state serializes to JSON for checkpoints.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .tensor import Tensor, get_dtype
from . import tensor as T

LOG_2PI = math.log(2.0 * math.pi)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def rng_state_json(rng: np.random.Generator) -> str:
    state = rng.bit_generator.state

    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, np.ndarray):
            return [int(i) for i in v]
        if isinstance(v, np.integer):
            return int(v)
        return v

    return json.dumps(conv(state), sort_keys=True)


def rng_from_json(text: str) -> np.random.Generator:
    state = json.loads(text)
    if state.get("bit_generator") != "Philox":
        raise ValueError(f"unsupported generator {state.get('bit_generator')!r}")
    bg = np.random.Philox()
    inner = state["state"]
    state["state"] = {
        "counter": np.array(inner["counter"], dtype=np.uint64),
        "key": np.array(inner["key"], dtype=np.uint64),
    }
    state["buffer"] = np.array(state["buffer"], dtype=np.uint64)
    bg.state = state
    return np.random.Generator(bg)


def gaussian_sample(shape, seed: int | np.random.Generator) -> Tensor:
    """Standard-normal tensor; same seed gives bit-identical output."""
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return Tensor(rng.standard_normal(shape).astype(get_dtype()))


def gaussian_logpdf(z: Tensor) -> Tensor:
    """log N(z; 0, I) summed over all K elements: -(|z|^2 + K ln 2pi) / 2."""
    k = z.size
    return T.mul(T.add(T.sum(T.square(z)), k * LOG_2PI), -0.5)
