"""Adversarial and perceptual objectives.

All functions are pure and operate on torch tensors; reductions are
arithmetic means over the batch. Critic inputs are raw (non-sigmoid) values.
"""
from dataclasses import dataclass

import torch

from .errors import EmptyBatch, ShapeMismatch

LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_con: float = 1.0
    lambda_adv: float = 1e-3


def _check_pair(c_real, c_fake):
    if c_real.numel() == 0 or c_fake.numel() == 0:
        raise EmptyBatch("critic batches must be non-empty")
    if c_real.shape != c_fake.shape:
        raise ShapeMismatch(f"critic batches differ: {c_real.shape} vs {c_fake.shape}")


def relativistic_transform(c_real, c_fake):
    """Center each class on the mean critic value of the opposite class."""
    c_real = torch.as_tensor(c_real)
    c_fake = torch.as_tensor(c_fake)
    _check_pair(c_real, c_fake)
    return c_real - c_fake.mean(), c_fake - c_real.mean()


def rals_d_loss(ct_real, ct_fake):
    """Discriminator loss on relativistic values: real -> +1, fake -> -1."""
    ct_real = torch.as_tensor(ct_real)
    ct_fake = torch.as_tensor(ct_fake)
    _check_pair(ct_real, ct_fake)
    return ((ct_real - 1) ** 2).mean() + ((ct_fake + 1) ** 2).mean()


def rals_g_loss(ct_real, ct_fake):
    """Generator loss: roles reversed, fake -> +1, real -> -1."""
    return rals_d_loss(ct_fake, ct_real)


def lsgan_d_loss(c_real, c_fake):
    """Plain least-squares discriminator loss with conventional 1/0 labels."""
    c_real = torch.as_tensor(c_real)
    c_fake = torch.as_tensor(c_fake)
    _check_pair(c_real, c_fake)
    return ((c_real - 1) ** 2).mean() + (c_fake**2).mean()


def bce_gan_losses(c_real, c_fake):
    """Standard GAN losses on raw critic values; sigmoid applied internally.

    The generator term uses the non-saturating form -log sigma(c_fake).
    """
    c_real = torch.as_tensor(c_real)
    c_fake = torch.as_tensor(c_fake)
    _check_pair(c_real, c_fake)
    d_real = torch.sigmoid(c_real).clamp_min(LOG_EPS)
    d_fake = torch.sigmoid(c_fake)
    l_d = -torch.log(d_real).mean() - torch.log((1 - d_fake).clamp_min(LOG_EPS)).mean()
    l_g = -torch.log(d_fake.clamp_min(LOG_EPS)).mean()
    return l_d, l_g


def perceptual_loss(feat_hr, feat_sr):
    """Mean squared distance between feature maps, averaged over all elements."""
    feat_hr = torch.as_tensor(feat_hr)
    feat_sr = torch.as_tensor(feat_sr)
    if feat_hr.shape != feat_sr.shape:
        raise ShapeMismatch(f"feature shapes differ: {feat_hr.shape} vs {feat_sr.shape}")
    return ((feat_hr - feat_sr) ** 2).mean()


def total_g_loss(l_perceptual, l_g_adv, weights=LossWeights()):
    return weights.lambda_con * l_perceptual + weights.lambda_adv * l_g_adv
