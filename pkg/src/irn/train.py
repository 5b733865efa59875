"""Two-stage training: the surrogate objective (stage 1), then adversarial finetuning (stage 2)."""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .data import sample_patches
from .discriminator import Discriminator
from .layers import quantize
from .losses import discriminator_loss, generator_loss, js_estimate, loss_ce_z, loss_guide, loss_recon
from .models import IrnModel, build_model
from .optim import Adam, halving_lr
from .rng import make_rng, rng_from_json, rng_state_json
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_HEADER = ["iter", "recon", "guide", "distr", "total", "lr"]


class TrainingDiverged(FloatingPointError):
    """Raised on a non-finite loss; ``checkpoint`` holds the last good state."""

    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def stage1_terms(model: IrnModel, x: Tensor, y_guide: Tensor, weights, latent=None, lr_input=None,
                 z_samples: int = 1) -> dict[str, Tensor]:
    """lambda1 L_recon + lambda2 L_guide + lambda3 L_ce and its parts.

    ``latent(shape)`` supplies z for the inverse pass (zeros if ``None``) and
    ``lr_input(y)`` maps the forward LR output to what the inverse sees
    (identity if ``None``).
    """
    y, z = model.split(model.forward(x))
    guide = loss_guide(y, y_guide, weights.metric_y, "sum")
    distr = loss_ce_z(z)
    y_in = y if lr_input is None else lr_input(y)
    recon = None
    for _ in range(z_samples):
        zz = Tensor(np.zeros(z.shape)) if latent is None else latent(z.shape)
        r = loss_recon(x, model.inverse(model.join(y_in, zz)), weights.metric_x, "sum")
        recon = r if recon is None else T.add(recon, r)
    if z_samples > 1:
        recon = T.mul(recon, 1.0 / z_samples)
    total = T.add(T.add(T.mul(recon, weights.lambda1), T.mul(guide, weights.lambda2)),
                  T.mul(distr, weights.lambda3))
    return {"recon": recon, "guide": guide, "distr": distr, "total": total}


class Trainer:
    """Owns a model, its optimizer(s), the data/latent RNG and the loss log."""

    def __init__(self, cfg: TrainConfig, images, model: IrnModel | None = None):
        self.cfg = cfg
        self.images = list(images)
        if not self.images:
            raise ValueError("dataset is empty")
        for img in self.images:
            if img.height < cfg.crop or img.width < cfg.crop:
                raise ValueError(f"image {img.height}x{img.width} is smaller than crop {cfg.crop}")
        self.model = model if model is not None else build_model(cfg.model_config())
        self.weights = cfg.weights()
        self.rng = make_rng(cfg.seed + 1)
        self.opt = Adam(self.model.named_parameters(), lr=cfg.lr)
        self.disc: Discriminator | None = None
        self.opt_d: Adam | None = None
        if cfg.stage == 2:
            self.disc = Discriminator(cfg.crop, make_rng(cfg.seed + 2), width=cfg.disc_width)
            self.opt_d = Adam(self.disc.named_parameters(), lr=cfg.lr_d)
        self.iteration = 0
        self.disc_iteration = 0
        self.history: list[dict] = []

    # -- pieces -----------------------------------------------------------------

    def batch(self) -> tuple[Tensor, Tensor]:
        c = self.cfg
        x, g = sample_patches(self.images, c.batch, c.crop, c.factor, self.rng, c.flips,
                              grayscale_guide=c.variant == "IRN_color")
        return Tensor(x), Tensor(g)

    def _latent(self, shape) -> Tensor:
        if self.cfg.z_train == "zero":
            return Tensor(np.zeros(shape))
        return Tensor(self.rng.standard_normal(shape))

    def _lr_input(self, y: Tensor) -> Tensor:
        y_in = quantize(y) if self.cfg.quantize else y
        if self.cfg.noise > 0:
            y_in = T.add(y_in, Tensor(self.rng.uniform(-self.cfg.noise, self.cfg.noise, y.shape)))
        return y_in

    def reconstruct(self, y: Tensor, z_shape) -> Tensor:
        return self.model.inverse(self.model.join(self._lr_input(y), self._latent(z_shape)))

    def losses(self, x: Tensor, y_guide: Tensor) -> dict[str, Tensor]:
        """Stage-1 loss terms on one batch (per-image sums, batch mean)."""
        return stage1_terms(self.model, x, y_guide, self.weights, self._latent, self._lr_input,
                            self.cfg.z_samples)

    def _check(self, terms: dict[str, Tensor]) -> None:
        bad = [k for k, v in terms.items() if not np.isfinite(v.item())]
        if bad:
            raise TrainingDiverged(f"non-finite loss term(s) {bad} at iteration {self.iteration}",
                                   self.checkpoint())

    def _record(self, terms: dict[str, float]) -> None:
        it = self.iteration
        if it == 1 or it % self.cfg.log_every == 0:
            row = {"iter": it, **terms, "lr": self.opt.lr}
            self.history.append(row)
            log.debug("iter %d total %.4f", it, terms["total"])

    # -- stage 1 ------------------------------------------------------------------

    def step(self) -> dict[str, float]:
        self.opt.lr = halving_lr(self.cfg.lr, self.cfg.milestones, self.iteration)
        x, g = self.batch()
        terms = self.losses(x, g)
        self._check(terms)
        self.opt.zero_grad()
        T.backward(terms["total"])
        self.opt.step()
        self.model.check_invertible()
        self.iteration += 1
        vals = {k: v.item() for k, v in terms.items()}
        self._record(vals)
        return vals

    # -- stage 2 ------------------------------------------------------------------

    def _fake(self, x: Tensor) -> Tensor:
        with T.no_grad():
            y, z = self.model.split(self.model.forward(x))
            return self.reconstruct(y, z.shape)

    def disc_step(self, x: Tensor | None = None, fake: Tensor | None = None) -> float:
        """One discriminator update on real crops vs current reconstructions."""
        if x is None:
            x, _ = self.batch()
        if fake is None:
            fake = self._fake(x)
        self.opt_d.zero_grad()
        loss = discriminator_loss(self.disc(x), self.disc(fake.detach()))
        T.backward(loss)
        self.opt_d.step()
        self.disc_iteration += 1
        return loss.item()

    def pretrain_discriminator(self, iters: int | None = None) -> list[float]:
        iters = self.cfg.disc_iters if iters is None else iters
        return [self.disc_step() for _ in range(iters)]

    def adversarial_step(self) -> dict[str, float]:
        w = self.weights
        self.opt.lr = halving_lr(self.cfg.lr, self.cfg.milestones, self.iteration)
        x, g = self.batch()
        y, z = self.model.split(self.model.forward(x))
        guide = loss_guide(y, g, w.metric_y, "sum")
        x_hat = self.reconstruct(y, z.shape)
        recon = loss_recon(x, x_hat, w.metric_x, "sum")
        t_fake = self.disc(x_hat)
        gen = generator_loss(t_fake)
        total = T.add(T.add(T.mul(recon, w.lambda1), T.mul(guide, w.lambda2)), T.mul(gen, w.lambda3))
        with T.no_grad():
            js = js_estimate(self.disc(x), Tensor(t_fake.data))
        terms = {"recon": recon, "guide": guide, "distr": js, "total": total}
        self._check(terms)
        self.opt.zero_grad()
        self.disc.zero_grad()
        T.backward(total)
        self.opt.step()
        self.model.check_invertible()
        self.disc_step(x, Tensor(x_hat.data))
        self.iteration += 1
        vals = {k: v.item() for k, v in terms.items()}
        self._record(vals)
        return vals

    # -- driver -------------------------------------------------------------------

    def run(self, iters: int | None = None, log_path=None, checkpoint_path=None) -> Checkpoint:
        target = self.cfg.iters if iters is None else iters
        step = self.step if self.cfg.stage == 1 else self.adversarial_step
        if self.cfg.stage == 2 and self.disc_iteration == 0:
            self.pretrain_discriminator()
        try:
            while self.iteration < target:
                step()
        except TrainingDiverged as exc:
            if checkpoint_path is not None:
                save_checkpoint(exc.checkpoint, checkpoint_path)
            if log_path is not None:
                self.write_log(log_path)
            raise
        ck = self.checkpoint()
        if checkpoint_path is not None:
            save_checkpoint(ck, checkpoint_path)
        if log_path is not None:
            self.write_log(log_path)
        return ck

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_HEADER)
            for row in self.history:
                w.writerow([row["iter"]] + [repr(float(row[k])) for k in LOG_HEADER[1:]])

    def checkpoint(self) -> Checkpoint:
        cfg = self.cfg.to_dict()
        cfg["iteration"] = str(self.iteration)
        cfg["disc_iteration"] = str(self.disc_iteration)
        tensors = {"model." + k: v.data.copy() for k, v in self.model.named_parameters().items()}
        opts = {"gen": _copy_state(self.opt.state)}
        if self.disc is not None:
            tensors.update({"disc." + k: v.data.copy() for k, v in self.disc.named_parameters().items()})
            opts["disc"] = _copy_state(self.opt_d.state)
        return Checkpoint(self.cfg.variant, self.cfg.factor, cfg, tensors, opts, rng_state_json(self.rng))

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint, images, cfg: TrainConfig | None = None) -> "Trainer":
        """Resume (same stage) or start a new stage from ``ck``'s model weights."""
        from .config import load_config
        saved = load_config(overrides={k: v for k, v in ck.config.items()
                                       if k not in ("iteration", "disc_iteration")})
        cfg = saved if cfg is None else cfg
        if cfg.model_config().as_dict() | {"seed": 0} != saved.model_config().as_dict() | {"seed": 0}:
            raise ValueError("checkpoint architecture does not match the requested config")
        model = model_from_checkpoint(ck)
        tr = cls(cfg, images, model)
        if cfg.stage == saved.stage:
            tr.iteration = int(ck.config.get("iteration", 0))
            tr.disc_iteration = int(ck.config.get("disc_iteration", 0))
            if "gen" in ck.optimizers:
                st = ck.optimizers["gen"]
                tr.opt.state.t, tr.opt.state.m, tr.opt.state.v = st.t, dict(st.m), dict(st.v)
            if tr.disc is not None and "disc" in ck.optimizers:
                tr.disc.load_state_dict(ck.params("disc."))
                st = ck.optimizers["disc"]
                tr.opt_d.state.t, tr.opt_d.state.m, tr.opt_d.state.v = st.t, dict(st.m), dict(st.v)
            tr.rng = rng_from_json(ck.rng_state)
        return tr


def _copy_state(st):
    from .optim import AdamState
    return AdamState(st.lr, st.beta1, st.beta2, st.eps, st.t,
                     {k: v.copy() for k, v in st.m.items()}, {k: v.copy() for k, v in st.v.items()})


def model_from_checkpoint(ck: Checkpoint) -> IrnModel:
    from .config import load_config
    cfg = load_config(overrides={k: v for k, v in ck.config.items() if k not in ("iteration", "disc_iteration")})
    model = build_model(cfg.model_config())
    model.load_state_dict(ck.params("model."))
    return model


def train_stage1(images, cfg: TrainConfig, model: IrnModel | None = None, log_path=None,
                 checkpoint_path=None) -> tuple[Trainer, Checkpoint]:
    """Minimise lambda1 L_recon + lambda2 L_guide + lambda3 L_ce for ``cfg.iters`` steps."""
    if cfg.stage != 1:
        cfg = cfg.replace(stage=1)
    tr = Trainer(cfg, images, model)
    ck = tr.run(log_path=log_path, checkpoint_path=checkpoint_path)
    return tr, ck


def train_stage2(checkpoint: Checkpoint, images, cfg: TrainConfig | None = None, log_path=None,
                 checkpoint_path=None) -> tuple[Trainer, Checkpoint]:
    """Adversarial finetuning from a stage-1 checkpoint (default weights 0.01, s^2, 1)."""
    if cfg is None:
        from .config import load_config
        base = load_config(overrides={k: v for k, v in checkpoint.config.items()
                                      if k not in ("iteration", "disc_iteration")})
        cfg = base.replace(stage=2, lambda1=0.01, lr=base.lr / 2)
    if cfg.stage != 2:
        cfg = cfg.replace(stage=2)
    tr = Trainer.from_checkpoint(checkpoint, images, cfg)
    ck = tr.run(log_path=log_path, checkpoint_path=checkpoint_path)
    return tr, ck


def read_log(path) -> list[dict[str, float]]:
    with open(Path(path), newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
