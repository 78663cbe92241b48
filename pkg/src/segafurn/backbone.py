"""Frozen VGG-style conv stack used as semantic encoder and feature extractor.

One weight set serves both roles: `encode_semantics` taps whichever stage
produces a 16x16 map for its input size and projects it to a common channel
count, while `extract_features` returns the raw (pre-activation) output of a
named conv layer for the perceptual loss.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import tensorio
from .errors import ShapeMismatch, SizeMismatch, UnknownTap

SEMANTIC_SPATIAL = 16


@dataclass(frozen=True)
class ConvStackSpec:
    """Stage layout: (conv count, channels) per pooling stage."""

    stages: tuple = ((2, 64), (2, 128), (4, 256), (4, 512), (4, 512))
    semantic_channels: int = 256
    tap_points: tuple = ()  # extra named taps to validate at build time

    @classmethod
    def vgg19(cls, semantic_channels=256, **kw):
        return cls(semantic_channels=semantic_channels, **kw)

    @classmethod
    def tiny(cls, semantic_channels=32, **kw):
        return cls(
            stages=((2, 8), (2, 16), (2, 16), (2, 32), (2, 32)),
            semantic_channels=semantic_channels,
            **kw,
        )

    def tap_ids(self):
        return [
            f"conv{i + 1}_{j + 1}"
            for i, (n, _) in enumerate(self.stages)
            for j in range(n)
        ]

    def default_perceptual_tap(self):
        # third conv of the third stage when it exists, else the stage's last
        n3 = self.stages[2][0]
        return f"conv3_{min(3, n3)}"


@dataclass(frozen=True)
class BackboneWeights:
    """Weight source: seeded-random (default) or an external blob directory."""

    source: str = "seeded-random"  # or "external-file"
    seed: int = 0
    path: str = ""


class Backbone(nn.Module):
    """Frozen conv stack with named taps; never trained."""

    def __init__(self, spec, weights=None):
        super().__init__()
        self.spec = spec
        self.convs = nn.ModuleDict()
        in_ch = 3
        for i, (n_convs, ch) in enumerate(spec.stages):
            for j in range(n_convs):
                self.convs[f"conv{i + 1}_{j + 1}"] = nn.Conv2d(in_ch, ch, 3, padding=1)
                in_ch = ch
        # one 1x1 projection per stage so any tap depth maps to the common
        # semantic channel count
        self.projections = nn.ModuleDict(
            {
                f"stage{i + 1}": nn.Conv2d(ch, spec.semantic_channels, 1, bias=False)
                for i, (_, ch) in enumerate(spec.stages)
            }
        )
        self.pool = nn.MaxPool2d(2)
        for tap in spec.tap_points:
            if tap not in self.convs:
                raise ShapeMismatch(f"spec names unknown tap id '{tap}'")
        weights = weights or BackboneWeights()
        if weights.source == "seeded-random":
            self._init_seeded(weights.seed)
        elif weights.source == "external-file":
            self._load_external(weights.path)
        else:
            raise ShapeMismatch(f"unknown weight source '{weights.source}'")
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _init_seeded(self, seed):
        g = torch.Generator().manual_seed(seed)
        for name, p in sorted(self.named_parameters()):
            if p.ndim > 1:
                fan_in = p[0].numel()
                p.data.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
            else:
                p.data.zero_()

    def _load_external(self, path):
        expected = {n: tuple(p.shape) for n, p in self.named_parameters()}
        tensors, _ = tensorio.load_tensors(path, expected_shapes=expected)
        for name, p in self.named_parameters():
            p.data.copy_(torch.from_numpy(np.ascontiguousarray(tensors[name])))

    def save_weights(self, path):
        tensorio.save_tensors(
            path, {n: p.detach().numpy() for n, p in self.named_parameters()}
        )

    def _check_tap(self, tap):
        if tap not in self.convs:
            raise UnknownTap(f"no conv layer named '{tap}'")

    def _stage_of(self, tap):
        return int(tap.split("_")[0][4:])

    @torch.no_grad()
    def state_hash(self):
        import hashlib

        h = hashlib.sha256()
        for name, p in sorted(self.named_parameters()):
            h.update(name.encode())
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()

    def _run(self, x, stop_tap=None, stop_pre_activation=True):
        """Run stages; returns (tap outputs needed, final x).

        Pooling follows each stage. Stops early at `stop_tap` when given.
        """
        for i, (n_convs, _) in enumerate(self.spec.stages):
            for j in range(n_convs):
                tap = f"conv{i + 1}_{j + 1}"
                x = self.convs[tap](x)
                if tap == stop_tap and stop_pre_activation:
                    return x
                x = torch.relu(x)
                if tap == stop_tap:
                    return x
            if i < len(self.spec.stages) - 1:
                x = self.pool(x)
        return x

    def extract_features(self, img, tap=None):
        """Raw pre-activation output of the named conv layer."""
        tap = tap or self.spec.default_perceptual_tap()
        self._check_tap(tap)
        x = torch.as_tensor(img)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        out = self._run(x, stop_tap=tap)
        return out[0] if squeeze else out

    def encode_semantics(self, img):
        """Embedded semantics: (semantic_channels, 16, 16) per image.

        Taps the stage whose post-conv spatial extent is 16x16 for this
        input, then applies the stage's frozen 1x1 projection.
        """
        x = torch.as_tensor(img)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        size = x.shape[-1]
        if x.shape[-2] != size:
            raise SizeMismatch(f"expected square input, got {tuple(x.shape)}")
        if size < SEMANTIC_SPATIAL or size % SEMANTIC_SPATIAL != 0:
            raise SizeMismatch(f"input side {size} cannot reach {SEMANTIC_SPATIAL}x{SEMANTIC_SPATIAL}")
        n_pools = int(math.log2(size // SEMANTIC_SPATIAL))
        if 2**n_pools * SEMANTIC_SPATIAL != size or n_pools >= len(self.spec.stages):
            raise SizeMismatch(f"input side {size} unsupported by this stack")
        # the tap stage is the one reached after n_pools poolings
        stage = n_pools + 1
        for i in range(stage):
            for j in range(self.spec.stages[i][0]):
                x = torch.relu(self.convs[f"conv{i + 1}_{j + 1}"](x))
            if i < stage - 1:
                x = self.pool(x)
        out = self.projections[f"stage{stage}"](x)
        return out[0] if squeeze else out

    def forward(self, img):
        return self.extract_features(img)


def build_backbone(spec, weights=None):
    return Backbone(spec, weights)
