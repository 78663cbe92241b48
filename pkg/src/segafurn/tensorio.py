"""Directory-of-blobs tensor storage.

Each tensor is stored as a raw little-endian float32 file next to a JSON
manifest mapping name -> shape. Used for checkpoints and for external
backbone weights, so that weight files stay portable and inspectable.
"""
import json
import os

import numpy as np

from .errors import IoError, MissingWeightFile, ShapeMismatch

MANIFEST_NAME = "tensors.json"


def _blob_name(name):
    return name.replace("/", "__") + ".bin"


def save_tensors(dirpath, tensors, extra=None):
    """Write a name->ndarray mapping as float32 blobs plus a manifest.

    `extra` is an optional JSON-serializable dict stored alongside shapes.
    """
    os.makedirs(dirpath, exist_ok=True)
    manifest = {"tensors": {}, "extra": extra or {}}
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        manifest["tensors"][name] = list(arr.shape)
        arr.tofile(os.path.join(dirpath, _blob_name(name)))
    with open(os.path.join(dirpath, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def load_manifest(dirpath):
    path = os.path.join(dirpath, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise MissingWeightFile(f"no tensor manifest at {path}")
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IoError(f"cannot read tensor manifest {path}: {e}") from e


def load_tensors(dirpath, expected_shapes=None):
    """Load all tensors from a blob directory.

    When `expected_shapes` (name -> shape) is given, every expected tensor
    must be present with the exact shape; mismatches name the tensor.
    """
    manifest = load_manifest(dirpath)
    shapes = {k: tuple(v) for k, v in manifest["tensors"].items()}
    if expected_shapes is not None:
        for name, want in expected_shapes.items():
            if name not in shapes:
                raise MissingWeightFile(f"tensor '{name}' missing from {dirpath}")
            if shapes[name] != tuple(want):
                raise ShapeMismatch(
                    f"tensor '{name}' has shape {shapes[name]}, expected {tuple(want)}"
                )
    out = {}
    for name, shape in shapes.items():
        path = os.path.join(dirpath, _blob_name(name))
        if not os.path.isfile(path):
            raise MissingWeightFile(f"blob for tensor '{name}' missing from {dirpath}")
        arr = np.fromfile(path, dtype="<f4")
        n = int(np.prod(shape)) if shape else 1
        if arr.size != n:
            raise ShapeMismatch(
                f"tensor '{name}' blob holds {arr.size} values, expected {n}"
            )
        out[name] = arr.reshape(shape)
    return out, manifest.get("extra", {})
