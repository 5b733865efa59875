"""Store the low-resolution image with a lossy block-DCT codec and look at the cost.

Run:  python3 demos/03_rate_distortion.py [--model m.irnc]

Without ``--model`` only the bicubic pipelines are shown. With a trained
rescaler checkpoint (for example from ``irn train``) the script also trains a
small compression-restore network at quality 30 and adds the IRN curves.
"""
import argparse

from irn.checkpoint import load_checkpoint
from irn.compression import CrmTrainConfig, rd_eval, train_crm
from irn.data import toy_corpus
from irn.models import downscale
from irn.train import model_from_checkpoint

ap = argparse.ArgumentParser()
ap.add_argument("--model")
ap.add_argument("--crm-iters", type=int, default=200)
args = ap.parse_args()

images = toy_corpus(4, 96, seed=0)
qualities = [10, 30, 50, 70, 90]

print("pipeline                 q    bpp   PSNR (RGB)")
for p in rd_eval("bicubic+png+bicubic", images, [0]):
    print(f"{p.pipeline:22s}   -  {p.bpp:5.2f}  {p.psnr_db:6.2f}")
for p in rd_eval("bicubic+lossy+bicubic", images, qualities):
    print(f"{p.pipeline:22s} {p.quality:3d}  {p.bpp:5.2f}  {p.psnr_db:6.2f}")

if args.model:
    model = model_from_checkpoint(load_checkpoint(args.model))
    for p in rd_eval("irn+lossy+irn", images, qualities, model=model):
        print(f"{p.pipeline:22s} {p.quality:3d}  {p.bpp:5.2f}  {p.psnr_db:6.2f}")
    lr_train = [downscale(model, im)[0] for im in toy_corpus(8, 96, seed=1)]
    crm, _ = train_crm(lr_train, CrmTrainConfig(quality=30, iters=args.crm_iters))
    for p in rd_eval("irn+lossy+crm+irn", images, [30], model=model, crm=crm):
        print(f"{p.pipeline:22s} {p.quality:3d}  {p.bpp:5.2f}  {p.psnr_db:6.2f}")
