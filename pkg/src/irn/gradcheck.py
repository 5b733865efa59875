"""Central finite-difference check of the stage-1 loss gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import make_guide
from .losses import LossWeights
from .models import ModelConfig, build_model
from .rng import make_rng
from .tensor import Tensor
from .train import stage1_terms


@dataclass
class GradcheckResult:
    name: str
    size: int
    rel_error: float
    grad_norm: float


def gradcheck_stage1(blocks: int = 2, size: int = 16, features: int = 4, growth: int = 4, seed: int = 0,
                     eps: float = 1e-6, perturb: float = 0.1) -> list[GradcheckResult]:
    """Compare backprop against central differences for every parameter element.

    Runs in float64 on a one-module 2x model with ``blocks`` InvBlocks. The
    quantizer is left out (its straight-through gradient is not a derivative)
    and z is fixed, so the loss is a smooth function of the parameters. Every
    parameter gets a random perturbation so zero-initialised layers are probed
    away from their special starting point.
    """
    rng = make_rng(seed)
    with T.precision("float64"):
        model = build_model(ModelConfig("IRN", 2, blocks, features, growth, 1.0, 3, seed))
        for p in model.parameters():
            p.data = p.data + perturb * rng.standard_normal(p.shape)
        x_np = rng.uniform(0.0, 1.0, (1, size, size, 3))
        g_np = np.stack([make_guide(x, 2) for x in x_np])
        z_np = rng.standard_normal((1, size // 2, size // 2, model.latent.z_channels))
        weights = LossWeights(1.0, 4.0, 1.0)
        x, g = Tensor(x_np), Tensor(g_np)

        def loss() -> Tensor:
            return stage1_terms(model, x, g, weights, lambda shape: Tensor(z_np))["total"]

        model.zero_grad()
        T.backward(loss())
        results = []
        with T.no_grad():
            for name, p in model.named_parameters().items():
                analytic = p.grad.copy()
                numeric = np.zeros_like(p.data)
                flat, nflat = p.data.reshape(-1), numeric.reshape(-1)
                for i in range(flat.size):
                    old = flat[i]
                    flat[i] = old + eps
                    up = loss().item()
                    flat[i] = old - eps
                    down = loss().item()
                    flat[i] = old
                    nflat[i] = (up - down) / (2 * eps)
                scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
                results.append(GradcheckResult(name, p.size, float(np.abs(analytic - numeric).max() / scale),
                                               float(np.abs(analytic).max())))
    return results
