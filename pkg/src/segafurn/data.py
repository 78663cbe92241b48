"""HR/LR pair preparation: image IO, bicubic resampling, manifests, batching.

Images are float32 arrays of shape (3, H, W) with values in [0, 1];
quantization back to 8-bit happens only when a file is written.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DegenerateImage,
    EmptySplit,
    IndivisibleSize,
    InvalidDims,
    IoError,
    ShapeMismatch,
    UnreadableFile,
    UnsupportedFormat,
)

MANIFEST_VERSION = 1
MIN_IMAGE_SIDE = 8


@dataclass(frozen=True)
class DegradationSpec:
    """Bicubic degradation parameters for building LR images from HR."""

    scale: int = 4
    kernel_a: float = -0.5
    antialias: bool = True

    def __post_init__(self):
        if self.scale < 1 or (self.scale & (self.scale - 1)) != 0:
            raise InvalidDims(f"scale must be a positive power of two, got {self.scale}")


@dataclass
class Batch:
    hr: np.ndarray  # (B, 3, S, S)
    lr: np.ndarray  # (B, 3, S/r, S/r)
    indices: list


def load_image(path):
    """Decode an 8-bit image file to a (3, H, W) float array in [0, 1]."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32)
    except FileNotFoundError as e:
        raise UnreadableFile(f"file not found: {path}") from e
    except UnidentifiedImageError as e:
        raise UnsupportedFormat(f"not a decodable image: {path}") from e
    except OSError as e:
        raise UnreadableFile(f"cannot read {path}: {e}") from e
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / 255.0


def save_image(img, path):
    """Quantize a (3, H, W) float image to 8-bit and write it as PNG."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    try:
        Image.fromarray(u8).save(path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def quantize(img):
    """Round-trip a float image through 8-bit, as done at export/metric time."""
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0)
    return (u8 / 255.0).astype(np.float32)


def bicubic_kernel(x, a=-0.5):
    """Keys cubic kernel; a=-0.5 is the Catmull-Rom convention."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    m1 = x <= 1
    m2 = (x > 1) & (x < 2)
    out[m1] = (a + 2) * x[m1] ** 3 - (a + 3) * x[m1] ** 2 + 1
    out[m2] = a * x[m2] ** 3 - 5 * a * x[m2] ** 2 + 8 * a * x[m2] - 4 * a
    return out


def resample_matrix(in_size, out_size, a=-0.5, antialias=True):
    """Dense (out_size, in_size) row-stochastic bicubic interpolation matrix.

    When downsampling with antialias the kernel support widens by the scale
    factor. Edge taps clamp to the border pixel. Rows sum to 1 exactly.
    """
    scale = in_size / out_size
    support_scale = scale if (antialias and scale > 1) else 1.0
    support = 2.0 * support_scale
    mat = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        center = (i + 0.5) * scale - 0.5
        lo = int(math.floor(center - support)) + 1
        hi = int(math.floor(center + support)) + 1
        taps = np.arange(lo, hi)
        w = bicubic_kernel((taps - center) / support_scale, a)
        s = w.sum()
        if s == 0:
            raise InvalidDims("degenerate bicubic support")
        w = w / s
        np.add.at(mat[i], np.clip(taps, 0, in_size - 1), w)
    return mat


def bicubic_resample(img, out_h, out_w, spec=None):
    """Separable bicubic resize of a (3, H, W) image, clamped to [0, 1]."""
    if out_h < 4 or out_w < 4:
        raise InvalidDims(f"output dims must be >= 4, got {out_h}x{out_w}")
    spec = spec or DegradationSpec()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeMismatch(f"expected (3, H, W) image, got shape {img.shape}")
    _, h, w = img.shape
    mh = resample_matrix(h, out_h, spec.kernel_a, spec.antialias)
    mw = resample_matrix(w, out_w, spec.kernel_a, spec.antialias)
    out = np.einsum("ij,cjk,lk->cil", mh, img, mw)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def center_crop_resize(img, size):
    """Center-crop the larger dimension to square, then bicubic-resize."""
    img = np.asarray(img)
    _, h, w = img.shape
    if min(h, w) < MIN_IMAGE_SIDE:
        raise DegenerateImage(f"image {h}x{w} below minimum side {MIN_IMAGE_SIDE}")
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    img = img[:, top : top + side, left : left + side]
    if side == size:
        return img.astype(np.float32)
    return bicubic_resample(img, size, size)


def make_pair(img, spec):
    """HR image -> (hr, lr) where lr is the bicubic downsample by spec.scale."""
    img = np.asarray(img)
    _, h, w = img.shape
    if h != w:
        raise IndivisibleSize(f"expected square HR image, got {h}x{w}")
    if h % spec.scale != 0:
        raise IndivisibleSize(f"HR side {h} not divisible by scale {spec.scale}")
    lr = bicubic_resample(img, h // spec.scale, w // spec.scale, spec)
    return img.astype(np.float32), lr


@dataclass
class DatasetManifest:
    """List of (path, split) entries plus the preparation parameters."""

    entries: list = field(default_factory=list)  # (path, split) tuples
    hr_size: int = 256
    seed: int = 0
    root: str = "."

    def paths(self, split):
        return [p for p, s in self.entries if s == split]

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def save(self, path):
        data = {
            "entries": [{"path": p, "split": s} for p, s in self.entries],
            "hr_size": self.hr_size,
            "seed": self.seed,
            "version": MANIFEST_VERSION,
        }
        try:
            with open(path, "w") as f:
                json.dump(data, f, indent=1)
        except OSError as e:
            raise IoError(f"cannot write manifest {path}: {e}") from e

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise IoError(f"cannot read manifest {path}: {e}") from e
        m = cls(
            entries=[(e["path"], e["split"]) for e in data["entries"]],
            hr_size=int(data["hr_size"]),
            seed=int(data.get("seed", 0)),
            root=os.path.dirname(os.path.abspath(path)),
        )
        for p, _ in m.entries:
            full = m.resolve(p)
            if not os.path.isfile(full):
                raise UnreadableFile(f"manifest entry not readable: {full}")
        return m


class _ImageCache:
    def __init__(self, manifest):
        self.manifest = manifest
        self._cache = {}

    def get(self, path):
        if path not in self._cache:
            self._cache[path] = load_image(self.manifest.resolve(path))
        return self._cache[path]


def iterate_batches(manifest, batch_size, spec, seed, epochs=None):
    """Yield Batch objects; deterministic shuffle per (seed, epoch).

    Trailing partial batches are dropped so every batch has a fixed
    composition. `epochs=None` streams forever.
    """
    if batch_size < 1:
        raise InvalidDims(f"batch_size must be >= 1, got {batch_size}")
    train = manifest.paths("train")
    if not train:
        raise EmptySplit("manifest has no train entries")
    if batch_size > len(train):
        # partial batches are dropped, so this would yield nothing forever
        raise EmptySplit(
            f"batch_size {batch_size} exceeds train split size {len(train)}"
        )
    cache = _ImageCache(manifest)
    epoch = 0
    while epochs is None or epoch < epochs:
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(len(train))
        for start in range(0, len(train) - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            hrs, lrs = [], []
            for j in idx:
                hr, lr = make_pair(cache.get(train[j]), spec)
                hrs.append(hr)
                lrs.append(lr)
            yield Batch(hr=np.stack(hrs), lr=np.stack(lrs), indices=[int(j) for j in idx])
        epoch += 1


def _synth_image(hr_size, rng):
    """One deterministic pseudo-face: smooth blobs plus hard-edged features."""
    s = hr_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) / s
    img = np.zeros((3, s, s))
    base = rng.uniform(0.2, 0.8, size=3)
    for c in range(3):
        img[c] = base[c] + 0.15 * (xx - 0.5) * rng.uniform(-1, 1) + 0.15 * (
            yy - 0.5
        ) * rng.uniform(-1, 1)
    # smooth low-frequency blobs
    for _ in range(4):
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        sig = rng.uniform(0.1, 0.3)
        amp = rng.uniform(-0.25, 0.25, size=3)
        g = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sig**2)))
        img += amp[:, None, None] * g[None]
    # face oval with a hard edge
    fx, fy = rng.uniform(0.45, 0.55, size=2)
    ax_, ay_ = rng.uniform(0.22, 0.3), rng.uniform(0.3, 0.38)
    oval = (((xx - fx) / ax_) ** 2 + ((yy - fy) / ay_) ** 2) <= 1.0
    skin = rng.uniform(0.5, 0.85, size=3)
    img[:, oval] = 0.3 * img[:, oval] + 0.7 * skin[:, None]
    # eyes and mouth: small dark ellipses
    for dx in (-0.45, 0.45):
        ex, ey = fx + dx * ax_, fy - 0.3 * ay_
        eye = (((xx - ex) / (0.12 * ax_)) ** 2 + ((yy - ey) / (0.08 * ay_)) ** 2) <= 1.0
        img[:, eye] = rng.uniform(0.0, 0.15)
    mouth = (((xx - fx) / (0.4 * ax_)) ** 2 + ((yy - (fy + 0.45 * ay_)) / (0.1 * ay_)) ** 2) <= 1.0
    img[:, mouth] = rng.uniform(0.1, 0.4, size=3)[:, None]
    # hard-edged clutter (clothing, background structure)
    for _ in range(3):
        x0, y0 = rng.integers(0, s - 8, size=2)
        w_, h_ = rng.integers(4, max(5, s // 3), size=2)
        img[:, y0 : y0 + h_, x0 : x0 + w_] = rng.uniform(0, 1, size=3)[:, None, None]
    for _ in range(2):
        x0 = int(rng.integers(0, s - 3))
        img[:, :, x0 : x0 + 2] = rng.uniform(0, 1)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_dataset(count, hr_size, seed, out_dir, test_count=0):
    """Write `count` deterministic synthetic face images and a manifest.

    Re-running with the same arguments is byte-identical. The last
    `test_count` images are assigned to the test split.
    """
    if count < 1:
        raise EmptySplit(f"count must be >= 1, got {count}")
    if test_count >= count:
        raise EmptySplit("test_count leaves no train entries")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        img = _synth_image(hr_size, rng)
        name = f"synth_{i:04d}.png"
        save_image(img, os.path.join(out_dir, name))
        split = "test" if i >= count - test_count else "train"
        entries.append((name, split))
    manifest = DatasetManifest(entries=entries, hr_size=hr_size, seed=seed, root=out_dir)
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
