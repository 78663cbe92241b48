"""`furn` command line: synth, prepare, train, sr, eval.

Exit code 0 on success; on failure a JSON error object is printed to
stderr and the exit code is nonzero.
"""
import argparse
import json
import os
import sys

import numpy as np
import torch

from . import training
from .data import (
    DatasetManifest,
    DegradationSpec,
    center_crop_resize,
    load_image,
    make_pair,
    save_image,
    synth_dataset,
)
from .errors import IoError, SegafurnError, SizeMismatch
from .evaluate import evaluate, write_report
from .training import TrainConfig, Trainer, train


def _cmd_synth(args):
    manifest = synth_dataset(
        args.count, args.hr_size, args.seed, args.out, test_count=args.test_count
    )
    print(
        json.dumps(
            {
                "out": args.out,
                "count": len(manifest.entries),
                "train": len(manifest.paths("train")),
                "test": len(manifest.paths("test")),
            }
        )
    )


def _cmd_prepare(args):
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    names = sorted(
        n for n in os.listdir(args.input) if os.path.splitext(n)[1].lower() in exts
    )
    if not names:
        raise IoError(f"no images found in {args.input}")
    os.makedirs(args.output, exist_ok=True)
    scales = [int(s) for s in args.scales.split(",") if s]
    hr_dir = os.path.join(args.output, "hr")
    os.makedirs(hr_dir, exist_ok=True)
    lr_dirs = {}
    for r in scales:
        lr_dirs[r] = os.path.join(args.output, f"lr_x{r}")
        os.makedirs(lr_dirs[r], exist_ok=True)
    test_count = args.test_count if args.test_count >= 0 else max(1, len(names) // 8)
    entries = []
    for i, name in enumerate(names):
        img = load_image(os.path.join(args.input, name))
        hr = center_crop_resize(img, args.hr_size)
        out_name = os.path.splitext(name)[0] + ".png"
        save_image(hr, os.path.join(hr_dir, out_name))
        for r in scales:
            _, lr = make_pair(hr, DegradationSpec(scale=r))
            save_image(lr, os.path.join(lr_dirs[r], out_name))
        split = "test" if i >= len(names) - test_count else "train"
        entries.append((os.path.join("hr", out_name), split))
    manifest = DatasetManifest(
        entries=entries, hr_size=args.hr_size, seed=args.seed, root=args.output
    )
    manifest.save(os.path.join(args.output, "manifest.json"))
    print(json.dumps({"output": args.output, "images": len(names), "scales": scales}))


def _load_train_config(args):
    if args.config:
        try:
            with open(args.config) as f:
                cfg = TrainConfig.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise IoError(f"cannot read config {args.config}: {e}") from e
    else:
        cfg = TrainConfig()
    if args.variant:
        cfg.variant = args.variant
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    return cfg


def _cmd_train(args):
    cfg = _load_train_config(args)
    manifest = DatasetManifest.load(os.path.join(args.data, "manifest.json"))
    cfg.hr_size = manifest.hr_size
    trainer = train(cfg, manifest, args.out, resume=args.resume)
    last = trainer.loss_log[-1] if trainer.loss_log else {}
    print(
        json.dumps(
            {
                "out": args.out,
                "steps": trainer.step,
                "fingerprint": cfg.fingerprint(),
                "last_losses": last,
            }
        )
    )


def _resolve_checkpoint(path):
    # accept either a checkpoint directory or a run directory that
    # contains numbered checkpoints
    if os.path.exists(os.path.join(path, "tensors.json")):
        return path
    if not os.path.isdir(path):
        raise IoError(f"checkpoint path {path} does not exist")
    return training.latest_checkpoint(path)


def _cmd_sr(args):
    trainer = Trainer.load_checkpoint(_resolve_checkpoint(args.checkpoint))
    img = load_image(args.input)
    side = img.shape[-1]
    if img.shape[-2] != side:
        raise SizeMismatch(f"expected square input, got {img.shape[-2]}x{side}")
    sr = trainer.generator.super_resolve(torch.as_tensor(img[None], dtype=torch.float32))
    save_image(sr[0].numpy(), args.output)
    print(json.dumps({"input": args.input, "output": args.output, "scale": trainer.cfg.scale}))


def _cmd_eval(args):
    trainer = Trainer.load_checkpoint(_resolve_checkpoint(args.checkpoint))
    manifest = DatasetManifest.load(os.path.join(args.data, "manifest.json"))
    spec = trainer.cfg.degradation()
    report, samples = evaluate(
        trainer.generator, manifest, spec, variant=trainer.cfg.variant
    )
    write_report(report, args.report, samples=samples)
    print(
        json.dumps(
            {
                "report": args.report,
                "mean_psnr": report.mean_psnr,
                "mean_ssim": report.mean_ssim,
                "mean_psnr_bicubic": report.mean_psnr_bicubic,
                "mean_ssim_bicubic": report.mean_ssim_bicubic,
            }
        )
    )


def build_parser():
    p = argparse.ArgumentParser(prog="furn", description="Face super-resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--hr-size", type=int, default=64, dest="hr_size")
    sp.add_argument("--test-count", type=int, default=0, dest="test_count")
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("prepare", help="build HR/LR pairs from an image folder")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--hr-size", type=int, default=256, dest="hr_size")
    sp.add_argument("--scales", default="4,8")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--test-count", type=int, default=-1, dest="test_count")
    sp.set_defaults(func=_cmd_prepare)

    sp = sub.add_parser("train", help="train a variant on a prepared dataset")
    sp.add_argument("--config", default="")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant", choices=sorted(training.VARIANTS), default="")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--resume", action="store_true")
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("sr", help="super-resolve a single image")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.set_defaults(func=_cmd_sr)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report", required=True)
    sp.set_defaults(func=_cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except SegafurnError as e:
        print(json.dumps(e.as_dict()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
