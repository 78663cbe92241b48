"""Test-split evaluation: PSNR/SSIM vs the bicubic baseline, report rendering.

Reports are written three ways: a JSON document, a CSV of per-image rows,
and matplotlib figures (metric bars and an image comparison grid) saved
next to the report file.
"""
import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from .data import bicubic_resample, load_image, make_pair, quantize
from .errors import EmptySplit, IoError
from .metrics import psnr, ssim


@dataclass
class MetricsReport:
    variant: str
    scale: int
    count: int
    per_image: list = field(default_factory=list)
    mean_psnr: float = 0.0
    mean_ssim: float = 0.0
    mean_psnr_bicubic: float = 0.0
    mean_ssim_bicubic: float = 0.0

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def evaluate(generator, manifest, spec, variant="full"):
    """Super-resolve every test image; metrics on 8-bit-quantized outputs."""
    paths = manifest.paths("test")
    if not paths:
        raise EmptySplit("manifest has no test entries")
    rows = []
    samples = []
    for path in paths:
        hr = load_image(manifest.resolve(path))
        hr, lr = make_pair(hr, spec)
        sr = generator.super_resolve(torch.as_tensor(lr)).numpy()
        sr_q = quantize(sr)
        bic = quantize(bicubic_resample(lr, hr.shape[1], hr.shape[2]))
        hr_q = quantize(hr)
        rows.append(
            {
                "path": path,
                "psnr": psnr(hr_q, sr_q),
                "ssim": ssim(hr_q, sr_q),
                "psnr_bicubic": psnr(hr_q, bic),
                "ssim_bicubic": ssim(hr_q, bic),
            }
        )
        if len(samples) < 4:
            samples.append((path, lr, bic, sr_q, hr_q))
    report = MetricsReport(
        variant=variant,
        scale=spec.scale,
        count=len(rows),
        per_image=rows,
        mean_psnr=float(np.mean([r["psnr"] for r in rows])),
        mean_ssim=float(np.mean([r["ssim"] for r in rows])),
        mean_psnr_bicubic=float(np.mean([r["psnr_bicubic"] for r in rows])),
        mean_ssim_bicubic=float(np.mean([r["ssim_bicubic"] for r in rows])),
    )
    return report, samples


def save_report_json(report, path):
    try:
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, indent=1)
    except OSError as e:
        raise IoError(f"cannot write report {path}: {e}") from e


def load_report_json(path):
    try:
        with open(path) as f:
            return MetricsReport.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError) as e:
        raise IoError(f"cannot read report {path}: {e}") from e


def save_report_csv(report, path):
    fields = ["path", "psnr", "ssim", "psnr_bicubic", "ssim_bicubic"]
    try:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields)
            w.writeheader()
            for row in report.per_image:
                w.writerow(row)
    except OSError as e:
        raise IoError(f"cannot write csv {path}: {e}") from e


def _chw_to_hwc(img):
    return np.clip(np.asarray(img), 0, 1).transpose(1, 2, 0)


def render_metric_figure(report, path):
    """Per-image PSNR/SSIM bars, model vs bicubic baseline."""
    n = len(report.per_image)
    x = np.arange(n)
    fig, axes = plt.subplots(1, 2, figsize=(max(6, 1.2 * n), 4))
    for ax, key, title in zip(axes, ("psnr", "ssim"), ("PSNR (dB)", "SSIM")):
        ax.bar(x - 0.2, [r[key] for r in report.per_image], width=0.4, label="model")
        ax.bar(
            x + 0.2,
            [r[key + "_bicubic"] for r in report.per_image],
            width=0.4,
            label="bicubic",
        )
        ax.set_title(title)
        ax.set_xlabel("test image")
        ax.legend()
    fig.suptitle(f"variant={report.variant} scale=x{report.scale}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render_sample_grid(samples, path):
    """LR / bicubic / model / HR comparison grid for a few test images."""
    if not samples:
        return
    n = len(samples)
    fig, axes = plt.subplots(n, 4, figsize=(10, 2.6 * n), squeeze=False)
    titles = ["LR input", "bicubic", "model", "HR truth"]
    for i, (name, lr, bic, sr, hr) in enumerate(samples):
        for j, img in enumerate((lr, bic, sr, hr)):
            ax = axes[i][j]
            ax.imshow(_chw_to_hwc(img), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(titles[j])
        axes[i][0].set_ylabel(os.path.basename(name), fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_report(report, report_path, samples=None):
    """JSON report plus CSV and figures alongside it."""
    save_report_json(report, report_path)
    stem, _ = os.path.splitext(report_path)
    save_report_csv(report, stem + ".csv")
    render_metric_figure(report, stem + "_metrics.png")
    if samples:
        render_sample_grid(samples, stem + "_samples.png")
