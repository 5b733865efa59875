"""Acceptance criteria, one test each.

The toy stage-1 model behind criteria 4-7 and 9 is trained once per session
from ``configs/desk.cfg``. Each test reports a PASS/FAIL line before asserting,
and the lines are repeated in the pytest terminal summary. Run just this file
with ``pytest tests/test_acceptance.py -v``. Expect about an hour on one
core, mostly the 2x desk run (~12 min) and the colour run (~30 min).
"""
import copy
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from irn import tensor as T
from irn.compression import CrmTrainConfig, rd_eval, train_crm
from irn.config import load_config
from irn.data import toy_corpus
from irn.discriminator import Discriminator
from irn.evaluation import baseline_psnr, lr_psnr, mean_psnr, z_seed_spread, z_statistics
from irn.gradcheck import gradcheck_stage1
from irn.layers import haar_forward, haar_inverse
from irn.losses import discriminator_loss, js_estimate
from irn.metrics import psnr
from irn.models import ModelConfig, build_model, downscale, roundtrip
from irn.optim import Adam
from irn.rng import make_rng
from irn.tensor import Tensor
from irn.train import Trainer

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
pytestmark = pytest.mark.slow


@pytest.fixture(scope="session")
def toy_images():
    return toy_corpus(8, 96, seed=0)


@pytest.fixture(scope="session")
def toy_model(toy_images):
    """IRN 2x, 4 InvBlocks, F=16, G=8, 2000 stage-1 iterations at batch 4, crop 48."""
    cfg = load_config(CONFIGS / "desk.cfg")
    assert (cfg.variant, cfg.scale, cfg.blocks, cfg.features, cfg.growth) == ("IRN", 2, 4, 16, 8)
    assert (cfg.iters, cfg.batch, cfg.crop) == (2000, 4, 48)
    start = time.perf_counter()
    trainer = Trainer(cfg, toy_images)
    trainer.run()
    return trainer.model, time.perf_counter() - start


# --- 1-3: exact properties ----------------------------------------------------

BIJECTIVE = [("IRN", 2, 16), ("IRN", 4, 16), ("IRN_E", 4, 16), ("IRN_LD", 3, 12), ("IRN_color", 1, 16)]


def _random_model(variant, scale, seed):
    """Initial weights plus noise at 10% of each tensor's RMS (0.1 for zero-initialised tensors)."""
    model = build_model(ModelConfig(variant=variant, scale=scale, blocks=2, features=8, growth=4, seed=seed))
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        rms = float(np.sqrt(np.mean(np.square(p.data, dtype=np.float64))))
        sigma = 0.1 * rms if rms > 0 else 0.1
        p.data = (p.data + sigma * rng.standard_normal(p.shape)).astype(p.data.dtype)
    return model


def test_c1_bijectivity(acceptance_report):
    start = time.perf_counter()
    worst, cond = {}, 0.0
    for precision, tol in (("float32", 1e-4), ("float64", 1e-9)):
        with T.precision(precision), T.no_grad():
            for variant, scale, side in BIJECTIVE:
                model = _random_model(variant, scale, seed=11)
                cond = max([cond] + [float(np.linalg.cond(c.weight.data.astype(np.float64))) for c in model.invconvs()])
                x = np.random.default_rng(5).uniform(0, 1, (100, side, side, 3)).astype(precision)
                err = float(np.abs(model.inverse(model.forward(Tensor(x))).data - x).max())
                worst[(precision, variant, scale)] = err
    elapsed = time.perf_counter() - start
    ok = all(e <= (1e-4 if p == "float32" else 1e-9) for (p, _, _), e in worst.items()) and elapsed < 120
    w32 = max(e for k, e in worst.items() if k[0] == "float32")
    w64 = max(e for k, e in worst.items() if k[0] == "float64")
    acceptance_report(1, "bijectivity", ok, f"max err {w32:.1e} (32-bit), {w64:.1e} (64-bit), 1x1 conv condition {cond:.0f}, {elapsed:.1f} s")
    assert ok, worst


def test_c2_haar_golden(acceptance_report):
    with T.precision("float64"):
        x = Tensor(np.array([[1.0, 3.0], [5.0, 7.0]])[None, :, :, None])
        out = haar_forward(x)
        coeffs = out.data.reshape(4)
        back = haar_inverse(out).data
        const = haar_forward(Tensor(np.full((1, 4, 4, 3), 0.37))).data
    ok = (np.array_equal(coeffs, [4.0, -1.0, -2.0, 0.0]) and np.array_equal(back, x.data)
          and np.allclose(const[..., :3], 0.37, atol=1e-15) and np.allclose(const[..., 3:], 0, atol=1e-15))
    acceptance_report(2, "Haar golden block", ok, f"coefficients {coeffs.tolist()}")
    assert ok


def test_c3_gradient_check(acceptance_report):
    start = time.perf_counter()
    results = gradcheck_stage1(blocks=2, size=16)
    elapsed = time.perf_counter() - start
    worst = max(results, key=lambda r: r.rel_error)
    n = sum(r.size for r in results)
    ok = worst.rel_error < 1e-3 and elapsed < 300
    acceptance_report(3, "gradient check", ok,
                      f"{n} parameters, worst rel err {worst.rel_error:.1e} in {worst.name}, {elapsed:.0f} s")
    assert ok


# --- 4-7: toy stage-1 model ---------------------------------------------------

def test_c4_toy_training_beats_bicubic(toy_model, toy_images, acceptance_report):
    model, elapsed = toy_model
    ours = mean_psnr(model, toy_images)
    base = baseline_psnr(toy_images, 2)
    ok = ours - base >= 1.5 and elapsed < 3600
    acceptance_report(4, "toy roundtrip beats bicubic by 1.5 dB", ok,
                      f"IRN {ours:.2f} dB vs bicubic {base:.2f} dB, margin {ours - base:+.2f} dB, "
                      f"trained in {elapsed / 60:.1f} min")
    assert ok


def test_c5_lr_validity(toy_model, toy_images, acceptance_report):
    model, _ = toy_model
    value = lr_psnr(model, toy_images)
    ok = value >= 30.0
    acceptance_report(5, "LR output vs bicubic guide", ok, f"{value:.2f} dB")
    assert ok


def test_c6_z_insensitivity(toy_model, toy_images, acceptance_report):
    model, _ = toy_model
    spread, values = z_seed_spread(model, toy_images)
    ok = spread < 0.1
    acceptance_report(6, "roundtrip PSNR spread over 5 z seeds", ok,
                      f"std {spread:.3f} dB over {', '.join(f'{v:.2f}' for v in values)}")
    assert ok


def test_c7_z_statistics(toy_model, toy_images, acceptance_report):
    model, _ = toy_model
    stats = z_statistics(model, toy_images, batch=4)
    ok = all(-0.5 < m < 0.5 and 0.3 < v < 3.0 for m, v in stats)
    acceptance_report(7, "latent mean/variance per batch", ok,
                      "; ".join(f"mean {m:+.4f} var {v:.2e}" for m, v in stats))
    assert ok, stats


# --- 8: adversarial pieces ----------------------------------------------------

def test_c8_js_estimator_and_discriminator(acceptance_report):
    zero = float(js_estimate(Tensor(np.zeros(16, np.float32)), Tensor(np.zeros(16, np.float32))).item())
    with T.precision("float64"):
        zero64 = float(js_estimate(Tensor(np.zeros(16)), Tensor(np.zeros(16))).item())
    # separable pair: bright noisy crops vs dark noisy crops, one fixed batch
    rng = np.random.default_rng(0)
    real = Tensor(np.clip(0.7 + 0.1 * rng.standard_normal((4, 16, 16, 3)), 0, 1).astype(np.float32))
    fake = Tensor(np.clip(0.3 + 0.1 * rng.standard_normal((4, 16, 16, 3)), 0, 1).astype(np.float32))
    disc = Discriminator(16, make_rng(1), width=8)
    opt = Adam(disc.named_parameters(), lr=1e-4)
    losses = []
    for _ in range(200):
        opt.zero_grad()
        loss = discriminator_loss(disc(real), disc(fake))
        T.backward(loss)
        opt.step()
        losses.append(loss.item())
    steps = np.diff(losses)
    ok = zero == 0.0 and zero64 == 0.0 and bool(np.all(steps < 0))
    acceptance_report(8, "JS estimate and discriminator pre-train", ok,
                      f"JS(T=0) = {zero!r}; loss {losses[0]:.4f} -> {losses[-1]:.4f}, "
                      f"{int(np.sum(steps >= 0))} non-decreasing steps of 199")
    assert ok


# --- 9: compression -----------------------------------------------------------

def test_c9_compression_pipeline(toy_model, toy_images, acceptance_report):
    base, _ = toy_model
    start = time.perf_counter()
    # the compression pipelines use the noise-finetuned rescaler
    finetune = Trainer(load_config(CONFIGS / "noise_finetune.cfg"), toy_images, model=copy.deepcopy(base))
    finetune.run()
    model = finetune.model
    # the CRM learns from LR outputs of 64 held-out procedural images
    crm_corpus = toy_corpus(64, 96, seed=1)
    crm, _ = train_crm([downscale(model, img)[0] for img in crm_corpus], CrmTrainConfig(quality=30, iters=800))
    with_crm = rd_eval("irn+lossy+crm+irn", toy_images, [30], model=model, crm=crm)[0]
    without = rd_eval("irn+lossy+irn", toy_images, [30], model=model)[0]
    curve = rd_eval("irn+lossy+irn", toy_images, [10, 30, 50, 70, 90], model=model)
    elapsed = time.perf_counter() - start
    bpps = [p.bpp for p in curve]
    gain = with_crm.psnr_db - without.psnr_db
    monotone = all(a < b for a, b in zip(bpps, bpps[1:]))
    ok = gain >= 0.3 and monotone and elapsed < 1800
    acceptance_report(9, "CRM gain at q=30 and rate monotone in quality", ok,
                      f"{without.psnr_db:.2f} -> {with_crm.psnr_db:.2f} dB ({gain:+.2f}); "
                      f"bpp at q=10..90: {', '.join(f'{b:.2f}' for b in bpps)}; {elapsed / 60:.1f} min")
    assert ok


# --- 10: determinism ----------------------------------------------------------

def test_c10_deterministic_training(tmp_path, acceptance_report):
    env = dict(os.environ, IRN_THREADS="1")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.irnc"
        cmd = [sys.executable, "-m", "irn.cli", "train", "--config", str(CONFIGS / "desk.cfg"), "--set", "iters=100",
               "--out", str(out)]
        subprocess.run(cmd, check=True, env=env, capture_output=True)
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1]
    acceptance_report(10, "bit-identical checkpoints at iteration 100", ok, f"{len(outs[0])} bytes each")
    assert ok


# --- 11: decolorization -------------------------------------------------------

def test_c11_color_desk_run(toy_images, acceptance_report):
    cfg = load_config(CONFIGS / "color.cfg")
    trainer = Trainer(cfg, toy_images)
    trainer.run()
    model = trainer.model
    gray = [downscale(model, img)[0] for img in toy_images]
    values = [psnr(img, roundtrip(model, img, "zero"), "rgb") for img in toy_images]
    ok = float(np.mean(values)) >= 25.0 and all(g.channels == 1 for g in gray)
    acceptance_report(11, "colour restored from grayscale with z = 0", ok,
                      f"mean RGB PSNR {np.mean(values):.2f} dB (min {min(values):.2f})")
    assert ok
