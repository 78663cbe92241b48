"""Joint discriminator over (image, embedded-semantics) tuples.

Two branches: a semantics sub-net reducing the embedded semantics to a
32-vector and an image sub-net reducing the image to a 64-vector; their
concatenation feeds a fully-connected head ending in a single raw critic
value (no sigmoid).
"""
import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ShapeMismatch, WidthMismatch


@dataclass(frozen=True)
class DiscriminatorConfig:
    semantic_channels: int = 256
    esldsn_channels: tuple = (64, 64, 32, 32, 16, 8)
    esldsn_strides: tuple = (1, 2, 1, 2, 1, 2)
    ildsn_channels: tuple = (32, 32, 64, 64, 128, 128, 256, 256, 64)
    ildsn_strides: tuple = (1, 2, 1, 2, 1, 2, 1, 2, 2)
    fcm_widths: tuple = (256, 128, 64, 32, 16, 1)
    leaky_slope: float = 0.2
    dropout: float = 0.4
    use_semantics: bool = True

    @property
    def esldsn_out(self):
        return self.esldsn_channels[-1] * 2 * 2

    @property
    def ildsn_out(self):
        return self.ildsn_channels[-1]

    @property
    def fcm_in(self):
        return self.esldsn_out + self.ildsn_out if self.use_semantics else self.ildsn_out


class SemanticsSubNet(nn.Module):
    """Six strided convs collapsing the semantic map to a 32-vector."""

    def __init__(self, cfg):
        super().__init__()
        layers = []
        in_ch = cfg.semantic_channels
        for ch, s in zip(cfg.esldsn_channels, cfg.esldsn_strides):
            layers += [nn.Conv2d(in_ch, ch, 3, stride=s, padding=1), nn.LeakyReLU(cfg.leaky_slope)]
            in_ch = ch
        self.body = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(2)
        self.out_dim = cfg.esldsn_out

    def forward(self, x):
        y = self.body(x)
        if y.shape[-2:] != (2, 2):
            y = self.pool(y)
        return y.flatten(1)


class ImageSubNet(nn.Module):
    """Nine conv groups (BN in all but the first) pooled to a 64-vector."""

    def __init__(self, cfg):
        super().__init__()
        layers = []
        in_ch = 3
        for i, (ch, s) in enumerate(zip(cfg.ildsn_channels, cfg.ildsn_strides)):
            layers.append(nn.Conv2d(in_ch, ch, 3, stride=s, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(ch))
            layers.append(nn.LeakyReLU(cfg.leaky_slope))
            in_ch = ch
        self.body = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.out_dim = cfg.ildsn_out

    def forward(self, x):
        if x.shape[-3] != 3:
            raise ShapeMismatch(f"image branch expects 3 channels, got {x.shape[-3]}")
        return self.pool(self.body(x)).flatten(1)


class FullyConnectedHead(nn.Module):
    """Dense blocks 256..16 with leaky+dropout, then a linear critic output."""

    def __init__(self, cfg):
        super().__init__()
        self.in_dim = cfg.fcm_in
        layers = []
        in_w = cfg.fcm_in
        for w in cfg.fcm_widths[:-1]:
            layers += [nn.Linear(in_w, w), nn.LeakyReLU(cfg.leaky_slope), nn.Dropout(cfg.dropout)]
            in_w = w
        layers.append(nn.Linear(in_w, cfg.fcm_widths[-1]))
        self.body = nn.Sequential(*layers)

    def forward(self, vec):
        if vec.shape[-1] != self.in_dim:
            raise WidthMismatch(f"head expects width {self.in_dim}, got {vec.shape[-1]}")
        return self.body(vec).squeeze(-1)


class JointDiscriminator(nn.Module):
    def __init__(self, cfg, seed=0):
        super().__init__()
        self.cfg = cfg
        self.semantics_net = SemanticsSubNet(cfg) if cfg.use_semantics else None
        self.image_net = ImageSubNet(cfg)
        self.head = FullyConnectedHead(cfg)
        self._init_seeded(seed)

    def _init_seeded(self, seed):
        g = torch.Generator().manual_seed(seed)
        for name, p in sorted(self.named_parameters()):
            if p.ndim > 1:
                fan_in = p[0].numel() if p.ndim > 1 else p.numel()
                p.data.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
            elif "bias" in name:
                p.data.zero_()
        # BN affine params keep their standard (1, 0) init
        for m in self.modules():
            if isinstance(m, nn.BatchNorm2d):
                m.weight.data.fill_(1.0)
                m.bias.data.zero_()

    def forward(self, image, semantics=None):
        """Raw critic value C(X), one scalar per batch element."""
        image = torch.as_tensor(image)
        if image.ndim == 3:
            image = image[None]
        img_vec = self.image_net(image)
        if self.cfg.use_semantics:
            if semantics is None:
                raise ShapeMismatch("semantics required when use_semantics is on")
            semantics = torch.as_tensor(semantics)
            if semantics.ndim == 3:
                semantics = semantics[None]
            if semantics.shape[0] != image.shape[0]:
                raise ShapeMismatch(
                    f"batch mismatch: image {image.shape[0]} vs semantics {semantics.shape[0]}"
                )
            vec = torch.cat([self.semantics_net(semantics), img_vec], dim=1)
        else:
            vec = img_vec
        return self.head(vec)

    def critic(self, image, semantics=None):
        return self.forward(image, semantics)


def build_discriminator(cfg, seed=0):
    return JointDiscriminator(cfg, seed=seed)
