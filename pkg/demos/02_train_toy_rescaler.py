"""Train a small 2x rescaler on procedural images and compare it with bicubic.

Run:  python3 demos/02_train_toy_rescaler.py [--iters 300] [--out demos/out]

With the default 300 iterations this takes two or three minutes on one core
and the model is still behind bicubic; ``--iters 2000`` with the desk
configuration (``configs/desk.cfg``) is what clears it.
"""
import argparse
from pathlib import Path

from irn.config import load_config
from irn.data import toy_corpus
from irn.evaluation import baseline_psnr, bicubic_roundtrip, lr_psnr, mean_psnr, z_statistics
from irn.images import save_png
from irn.models import downscale, roundtrip
from irn.train import Trainer

ap = argparse.ArgumentParser()
ap.add_argument("--iters", type=int, default=300)
ap.add_argument("--out", default="demos/out")
args = ap.parse_args()

root = Path(__file__).resolve().parent.parent
cfg = load_config(root / "configs" / "desk.cfg", {"iters": args.iters, "milestones": ""})
images = toy_corpus(8, 96, seed=0)
print(f"training {cfg.variant} x{cfg.scale}, {cfg.blocks} blocks, for {cfg.iters} iterations")

trainer = Trainer(cfg, images)
trainer.run()
for row in trainer.history:
    if row["iter"] % 100 == 0 or row["iter"] == 1:
        print(f"  iter {row['iter']:5d}  recon {row['recon']:9.2f}  guide {row['guide']:7.3f}  "
              f"latent {row['distr']:7.3f}")
model = trainer.model

print(f"roundtrip PSNR (Y): model {mean_psnr(model, images):.2f} dB, "
      f"bicubic down+up {baseline_psnr(images, 2):.2f} dB")
print(f"LR output vs bicubic guide: {lr_psnr(model, images):.2f} dB")
print("latent (mean, variance) per batch:", [(round(m, 4), round(v, 5)) for m, v in z_statistics(model, images)])

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
save_png(images[0], out / "hr.png")
save_png(downscale(model, images[0])[0], out / "lr.png")
save_png(roundtrip(model, images[0]), out / "restored.png")
save_png(bicubic_roundtrip(images[0], 2), out / "bicubic.png")
print(f"wrote hr/lr/restored/bicubic PNGs to {out}")
