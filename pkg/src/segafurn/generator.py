"""Super-resolution generator: shallow features -> dense-block trunk -> upsampler.

The trunk is a chain of dense nested blocks (DNBs); each DNB cascades three
residual-wrapped internal dense blocks (RIDBs) and closes with a scaled skip.
Global residual learning adds the shallow features back before upsampling.
"""
import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ChannelMismatch, InvalidConfig, SizeMismatch


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 64
    growth: int = 32
    n_dnb: int = 4
    ridb_per_dnb: int = 3
    idb_per_ridb: int = 2
    convs_per_idb: int = 3
    residual_scale: float = 0.2
    scale: int = 4

    def validate(self):
        if self.scale < 2 or (self.scale & (self.scale - 1)) != 0:
            raise InvalidConfig(f"scale must be a power of two >= 2, got {self.scale}")
        for name in ("base_channels", "growth", "n_dnb", "ridb_per_dnb", "idb_per_ridb", "convs_per_idb"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        return self

    @classmethod
    def tiny(cls, scale=4):
        return cls(base_channels=8, growth=4, n_dnb=1, scale=scale)


class InternalDenseBlock(nn.Module):
    """Densely connected 3x3 convs closed by a 1x1 fusion, with a scaled skip."""

    def __init__(self, channels, growth, n_convs, res_scale):
        super().__init__()
        self.res_scale = res_scale
        self.convs = nn.ModuleList(
            nn.Conv2d(channels + i * growth, growth, 3, padding=1) for i in range(n_convs)
        )
        self.fusion = nn.Conv2d(channels + n_convs * growth, channels, 1)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x):
        feats = [x]
        for conv in self.convs:
            feats.append(self.act(conv(torch.cat(feats, dim=1))))
        return x + self.res_scale * self.fusion(torch.cat(feats, dim=1))


class RIDB(nn.Module):
    """Residual-in-internal-dense block: stacked dense blocks plus outer skip."""

    def __init__(self, cfg):
        super().__init__()
        self.res_scale = cfg.residual_scale
        self.blocks = nn.Sequential(
            *(
                InternalDenseBlock(cfg.base_channels, cfg.growth, cfg.convs_per_idb, cfg.residual_scale)
                for _ in range(cfg.idb_per_ridb)
            )
        )

    def forward(self, x):
        if x.shape[-3] != self.blocks[0].convs[0].in_channels:
            raise ChannelMismatch(
                f"expected {self.blocks[0].convs[0].in_channels} channels, got {x.shape[-3]}"
            )
        # scale only the delta so a zero-weight block is an exact identity
        return x + self.res_scale * (self.blocks(x) - x)


class DNB(nn.Module):
    """Three RIDBs plus a scaling layer on the block-level skip."""

    def __init__(self, cfg):
        super().__init__()
        self.res_scale = cfg.residual_scale
        self.ridbs = nn.Sequential(*(RIDB(cfg) for _ in range(cfg.ridb_per_dnb)))

    def forward(self, x):
        return x + self.res_scale * (self.ridbs(x) - x)


class Generator(nn.Module):
    def __init__(self, cfg, seed=0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c0 = cfg.base_channels
        self.sfm = nn.Conv2d(3, c0, 3, padding=1)
        self.dnbs = nn.Sequential(*(DNB(cfg) for _ in range(cfg.n_dnb)))
        self.grl_fusion = nn.Conv2d(c0, c0, 3, padding=1)
        up = []
        for _ in range(int(math.log2(cfg.scale))):
            up += [nn.Conv2d(c0, 4 * c0, 3, padding=1), nn.PixelShuffle(2), nn.LeakyReLU(0.2)]
        self.upsampler = nn.Sequential(*up)
        self.conv_last = nn.Conv2d(c0, 3, 3, padding=1)
        self._init_seeded(seed)

    def _init_seeded(self, seed):
        """Deterministic init: the net starts as a nearest-neighbor upsampler.

        Dense-block interiors get small random weights; the shallow conv
        copies RGB into the feature channels, the sub-pixel convs replicate
        channels into the shuffle groups, the global fusion conv starts at
        zero, and the last conv selects the RGB channels back out.
        """
        g = torch.Generator().manual_seed(seed)
        c0 = self.cfg.base_channels
        with torch.no_grad():
            for name, p in sorted(self.named_parameters()):
                if p.ndim > 1:
                    fan_in = p[0].numel()
                    p.data.normal_(0.0, 0.1 * math.sqrt(2.0 / fan_in), generator=g)
                else:
                    p.data.zero_()
            self.sfm.weight.zero_()
            for c in range(c0):
                self.sfm.weight[c, c % 3, 1, 1] = 1.0
            self.grl_fusion.weight.zero_()
            for m in self.upsampler:
                if isinstance(m, nn.Conv2d):
                    m.weight.zero_()
                    for c in range(c0):
                        for k in range(4):
                            m.weight[4 * c + k, c, 1, 1] = 1.0
            self.conv_last.weight.zero_()
            for j in range(3):
                self.conv_last.weight[j, j, 1, 1] = 1.0

    def forward(self, lr_img):
        x = torch.as_tensor(lr_img)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        if x.shape[-3] != 3:
            raise SizeMismatch(f"expected 3-channel input, got shape {tuple(x.shape)}")
        f_sf = self.sfm(x)
        f_gf = self.grl_fusion(self.dnbs(f_sf))
        f_mhf = f_sf + f_gf
        out = self.conv_last(self.upsampler(f_mhf))
        return out[0] if squeeze else out

    @torch.no_grad()
    def super_resolve(self, lr_img):
        """Inference path: forward pass clamped to [0, 1]."""
        was_training = self.training
        self.eval()
        try:
            return self.forward(lr_img).clamp(0.0, 1.0)
        finally:
            self.train(was_training)


def build_generator(cfg, seed=0):
    return Generator(cfg, seed=seed)
