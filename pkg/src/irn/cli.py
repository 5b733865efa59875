"""``irn`` command-line front end.

Exit codes: 0 ok, 2 usage, 3 missing file, 4 bad config, 5 bad checkpoint,
6 image I/O, 7 training diverged, 8 gradient check failed, 1 anything else.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_IMAGE, EXIT_DIVERGED, \
    EXIT_GRADCHECK = 0, 1, 2, 3, 4, 5, 6, 7, 8

log = logging.getLogger("irn")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers --------------------------------------------------------------------

def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}", EXIT_MISSING)
    return p


def _out_path(path: str) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise CliError(f"output directory does not exist: {p.parent}", EXIT_MISSING)
    return p


def _dataset(args) -> list[tuple[str, object]]:
    from .data import load_dir, toy_corpus
    if args.dir is not None:
        _existing(args.dir, "image directory")
        try:
            return load_dir(args.dir)
        except FileNotFoundError as exc:
            raise CliError(str(exc), EXIT_MISSING) from exc
    imgs = toy_corpus(args.toy, args.toy_size, args.toy_seed)
    return [(f"toy_{i:03d}", im) for i, im in enumerate(imgs)]


def _load_model(path: str):
    from .checkpoint import load_checkpoint
    from .train import model_from_checkpoint
    ck = load_checkpoint(_existing(path, "model checkpoint"))
    if ck.variant == "CRM":
        raise CliError(f"{path} holds a CRM, not a rescaling model", EXIT_CHECKPOINT)
    return model_from_checkpoint(ck), ck


def _threads():
    """Cap BLAS/OpenMP pools at IRN_THREADS (if set)."""
    value = os.environ.get("IRN_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise CliError(f"IRN_THREADS must be a positive integer, got {value!r}", EXIT_CONFIG) from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _add_dataset_args(p: argparse.ArgumentParser, required_note: str = "") -> None:
    g = p.add_argument_group("dataset" + required_note)
    g.add_argument("--dir", help="directory of 8-bit PNG images")
    g.add_argument("--toy", type=int, default=8, help="if --dir is absent, generate this many toy images (default 8)")
    g.add_argument("--toy-size", type=int, default=96, help="toy image side in pixels (default 96)")
    g.add_argument("--toy-seed", type=int, default=0, help="toy corpus seed (default 0)")


# -- commands -------------------------------------------------------------------

def cmd_train(args) -> int:
    from .checkpoint import load_checkpoint
    from .config import load_config
    from .train import Trainer, model_from_checkpoint

    cfg = load_config(_existing(args.config, "config file"), args.set)
    init = _existing(args.init, "init checkpoint")
    resume = _existing(args.resume, "resume checkpoint")
    if init and resume:
        raise CliError("--init and --resume are mutually exclusive", EXIT_USAGE)
    if cfg.stage == 2 and not (init or resume):
        raise CliError("stage 2 needs a stage-1 checkpoint via --init", EXIT_CONFIG)
    out = _out_path(args.out)
    log_path = _out_path(args.log) if args.log else out.with_suffix(".csv")
    images = [im for _, im in _dataset(args)]

    if resume:
        tr = Trainer.from_checkpoint(load_checkpoint(resume), images, cfg)
    elif init:
        ck = load_checkpoint(init)
        if cfg.stage == 2:
            tr = Trainer.from_checkpoint(ck, images, cfg)
        else:
            model = model_from_checkpoint(ck)
            if model.config.as_dict() | {"seed": 0} != cfg.model_config().as_dict() | {"seed": 0}:
                raise CliError("init checkpoint architecture does not match the config", EXIT_CONFIG)
            tr = Trainer(cfg, images, model)
    else:
        tr = Trainer(cfg, images)
    tr.run(log_path=log_path, checkpoint_path=out)
    last = tr.history[-1] if tr.history else {}
    print(f"trained {cfg.variant} x{cfg.factor} stage {cfg.stage} to iteration {tr.iteration}; "
          f"checkpoint {out}; log {log_path}" + (f"; last total loss {last['total']:.4f}" if last else ""))
    return EXIT_OK


def cmd_downscale(args) -> int:
    from .images import load_png, save_png
    from .models import downscale, fractional_downscale
    src = _existing(args.inp, "input image")
    out = _out_path(args.out)
    model, _ = _load_model(args.model)
    img = load_png(src)
    if args.scale is not None and float(args.scale) != model.scale:
        y, z = fractional_downscale(model, img, float(args.scale))
    else:
        y, z = downscale(model, img)
    save_png(y, out)
    if args.z_out:
        np.save(_out_path(args.z_out), z)
    print(f"{src} {img.width}x{img.height} -> {out} {y.width}x{y.height}")
    return EXIT_OK


def cmd_upscale(args) -> int:
    from .images import load_png, save_png
    from .models import fractional_upscale, upscale
    src = _existing(args.inp, "input image")
    z_path = _existing(args.z_in, "latent file")
    if args.z == "given" and z_path is None:
        raise CliError("--z given needs --z-in", EXIT_USAGE)
    out = _out_path(args.out)
    model, _ = _load_model(args.model)
    y = load_png(src)
    z = np.load(z_path) if z_path else None
    if args.size:
        try:
            w, h = (int(v) for v in args.size.lower().split("x"))
        except ValueError:
            raise CliError(f"--size must look like WIDTHxHEIGHT, got {args.size!r}", EXIT_USAGE) from None
        x = fractional_upscale(model, y, (h, w), args.z, args.seed)
    else:
        x = upscale(model, y, args.z, args.seed, z)
    save_png(x, out)
    print(f"{src} {y.width}x{y.height} -> {out} {x.width}x{x.height} (z={args.z}, seed={args.seed})")
    return EXIT_OK


def cmd_roundtrip_eval(args) -> int:
    from .evaluation import roundtrip_table
    from .metrics import format_db
    csv_path = _out_path(args.csv)
    model, _ = _load_model(args.model)
    items = _dataset(args)
    rows = roundtrip_table(model, items, args.z, args.seed, args.channel)
    import csv
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "psnr_db", "ssim", "bicubic_psnr_db", "bicubic_ssim"])
        for r in rows:
            w.writerow([r.image_id, format_db(r.psnr_db), f"{r.ssim:.6f}", format_db(r.bicubic_psnr_db),
                        f"{r.bicubic_ssim:.6f}"])
    finite = [r for r in rows if np.isfinite(r.psnr_db)]
    mp = np.mean([r.psnr_db for r in finite]) if finite else float("inf")
    mb = np.mean([r.bicubic_psnr_db for r in rows])
    print(f"{len(rows)} images: model {format_db(mp)} dB, bicubic {format_db(mb)} dB, "
          f"margin {format_db(mp - mb)} dB -> {csv_path}")
    return EXIT_OK


def cmd_compress_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .compression.crm import crm_from_checkpoint
    from .compression.rd import Pipeline, rd_eval, write_rd_csv
    try:
        pipelines = [Pipeline.parse(p) for p in args.pipeline]
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    for q in args.quality:
        if not 1 <= q <= 100:
            raise CliError(f"quality must be in [1, 100], got {q}", EXIT_USAGE)
    needs_irn = any("irn" in (p.down, p.up) for p in pipelines)
    needs_crm = any(p.crm for p in pipelines)
    if needs_irn and not args.model:
        raise CliError("an irn pipeline needs --model", EXIT_USAGE)
    if needs_crm and not args.crm:
        raise CliError("a crm pipeline needs --crm", EXIT_USAGE)
    csv_path = _out_path(args.csv)
    model = _load_model(args.model)[0] if args.model else None
    crm = crm_from_checkpoint(load_checkpoint(_existing(args.crm, "CRM checkpoint"))) if args.crm else None
    scale = model.scale if model is not None else args.scale
    images = [im for _, im in _dataset(args)]
    points = []
    for p in pipelines:
        points += rd_eval(p, images, args.quality, scale, model, crm)
    write_rd_csv(csv_path, points)
    for pt in points:
        print(f"{pt.pipeline:28s} q={'-' if pt.quality is None else pt.quality:>3} "
              f"bpp={pt.bpp:.4f} psnr={pt.psnr_db:.2f} dB")
    return EXIT_OK


def cmd_train_crm(args) -> int:
    from .checkpoint import save_checkpoint
    from .compression.crm import CrmTrainConfig, crm_checkpoint, make_pairs, pairs_loss, train_crm
    from .models import downscale
    if not 1 <= args.quality <= 100:
        raise CliError(f"quality must be in [1, 100], got {args.quality}", EXIT_USAGE)
    out = _out_path(args.out)
    log_path = _out_path(args.log) if args.log else out.with_suffix(".csv")
    model, _ = _load_model(args.model)
    lr_images = [downscale(model, im)[0] for _, im in _dataset(args)]
    cfg = CrmTrainConfig(quality=args.quality, blocks=args.blocks, features=args.features, growth=args.growth,
                         iters=args.iters, lr=args.lr, seed=args.seed,
                         milestones=(int(args.iters * 0.625), int(args.iters * 0.875)))
    crm, _ = train_crm(lr_images, cfg, log_path)
    save_checkpoint(crm_checkpoint(crm), out)
    pairs = make_pairs(lr_images, args.quality)
    before = pairs_loss(type(crm)(cfg.blocks, cfg.features, cfg.growth, cfg.seed), pairs)
    print(f"CRM q={args.quality}: LR mse {before:.3e} (identity) -> {pairs_loss(crm, pairs):.3e}; "
          f"checkpoint {out}; log {log_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import gradcheck_stage1
    results = gradcheck_stage1(blocks=args.blocks, size=args.size, features=args.features, growth=args.growth,
                               seed=args.seed)
    worst = max(r.rel_error for r in results)
    for r in results:
        print(f"{r.name:40s} n={r.size:6d} rel_err={r.rel_error:.2e}")
    ok = worst < args.tol
    print(f"max relative error {worst:.2e} ({'PASS' if ok else 'FAIL'}, tolerance {args.tol:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_inspect(args) -> int:
    from .checkpoint import load_checkpoint
    ck = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    print(f"variant {ck.variant}  scale {ck.scale}")
    for k in sorted(ck.config):
        print(f"  {k} = {ck.config[k]}")
    total = 0
    for name in sorted(ck.tensors):
        arr = ck.tensors[name]
        total += arr.size
        if args.tensors:
            print(f"  {name:48s} {str(arr.shape):20s} {arr.dtype}")
    print(f"{len(ck.tensors)} tensors, {total} values")
    for name, st in sorted(ck.optimizers.items()):
        print(f"optimizer {name}: step {st.t}, lr {st.lr:g}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irn", description="Invertible image rescaling: train, rescale, evaluate.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("train", help="train a rescaling model (stage 1 or adversarial stage 2)",
                       description="Train from a key=value config. Stage 2 requires --init with a stage-1 checkpoint.")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--out", required=True, help="checkpoint path to write (.irnc)")
    p.add_argument("--log", help="loss CSV path (default: checkpoint path with .csv)")
    p.add_argument("--init", help="start from this checkpoint's weights (fresh optimizer)")
    p.add_argument("--resume", help="continue a run from its checkpoint")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("downscale", help="HR PNG -> LR PNG", description="Forward pass; writes the quantized LR image.")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--in", dest="inp", required=True, help="input HR PNG")
    p.add_argument("--out", required=True, help="output LR PNG")
    p.add_argument("--z-out", help="also save the latent as .npy (diagnostics)")
    p.add_argument("--scale", help="fractional target scale (uses the nearest trained integer model)")
    p.set_defaults(func=cmd_downscale)

    p = sub.add_parser("upscale", help="LR PNG -> HR PNG", description="Inverse pass with a chosen latent.")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--in", dest="inp", required=True, help="input LR PNG")
    p.add_argument("--out", required=True, help="output HR PNG")
    p.add_argument("--z", choices=("sample", "zero", "given"), default="sample", help="latent mode (default sample)")
    p.add_argument("--seed", type=int, default=0, help="latent seed for --z sample (default 0)")
    p.add_argument("--z-in", help=".npy latent for --z given")
    p.add_argument("--size", help="output WIDTHxHEIGHT for fractional scales")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("roundtrip-eval", help="per-image roundtrip PSNR/SSIM with the bicubic baseline",
                       description="Downscale, quantize and upscale every image; also report bicubic down+up.")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--csv", required=True, help="output CSV")
    p.add_argument("--z", choices=("sample", "zero"), default="sample", help="latent mode (default sample)")
    p.add_argument("--seed", type=int, default=0, help="latent seed (default 0)")
    p.add_argument("--channel", choices=("y", "rgb"), default="y", help="metric channels (default y)")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_roundtrip_eval)

    p = sub.add_parser("compress-eval", help="rate-distortion of rescaling + storage pipelines",
                       description="Pipelines look like down+store[+crm]+up, e.g. irn+lossy+crm+irn.")
    p.add_argument("--pipeline", action="append", required=True, help="pipeline spec (repeatable)")
    p.add_argument("--quality", type=int, nargs="*", default=[30], help="codec qualities (default 30)")
    p.add_argument("--model", help="IRN checkpoint for irn pipelines")
    p.add_argument("--crm", help="CRM checkpoint for crm pipelines")
    p.add_argument("--scale", type=int, default=2, help="scale for bicubic-only pipelines (default 2)")
    p.add_argument("--csv", required=True, help="output CSV (pipeline,quality,bpp,psnr_db)")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_compress_eval)

    p = sub.add_parser("train-crm", help="train a compression restore module for one codec quality",
                       description="Pairs are (codec(LR), LR) with LR the IRN downscale output.")
    p.add_argument("--model", required=True, help="IRN checkpoint used to make LR images")
    p.add_argument("--quality", type=int, default=30, help="codec quality (default 30)")
    p.add_argument("--out", required=True, help="CRM checkpoint path")
    p.add_argument("--log", help="loss CSV path")
    p.add_argument("--iters", type=int, default=400, help="iterations (default 400)")
    p.add_argument("--blocks", type=int, default=2, help="RRDB count (default 2)")
    p.add_argument("--features", type=int, default=32, help="feature width (default 32)")
    p.add_argument("--growth", type=int, default=16, help="dense growth (default 16)")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_train_crm)

    p = sub.add_parser("gradcheck", help="finite-difference check of the stage-1 gradient (float64)",
                       description="Compares backprop with central differences for every parameter element.")
    p.add_argument("--blocks", type=int, default=2, help="InvBlocks (default 2)")
    p.add_argument("--size", type=int, default=16, help="input side (default 16)")
    p.add_argument("--features", type=int, default=4, help="dense features (default 4)")
    p.add_argument("--growth", type=int, default=4, help="dense growth (default 4)")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    p.add_argument("--tol", type=float, default=1e-3, help="relative error tolerance (default 1e-3)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint's config and tensors",
                       description="Summarise an .irnc checkpoint.")
    p.add_argument("checkpoint", help="checkpoint path")
    p.add_argument("--tensors", action="store_true", help="list every tensor")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    from .checkpoint import CheckpointError
    from .config import ConfigError
    from .images import ImageIOError
    from .train import TrainingDiverged

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads():
            return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except CheckpointError as exc:
        code, msg = EXIT_CHECKPOINT, f"checkpoint error: {exc}"
    except ImageIOError as exc:
        code, msg = EXIT_IMAGE, f"image error: {exc}"
    except TrainingDiverged as exc:
        code, msg = EXIT_DIVERGED, f"training diverged: {exc}"
    except FileNotFoundError as exc:
        code, msg = EXIT_MISSING, str(exc)
    except ValueError as exc:
        code, msg = EXIT_ERROR, f"error: {exc}"
    print(f"irn {args.command}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
