"""SEGA-FURN style face super-resolution: models, losses, training, metrics."""

from .backbone import Backbone, BackboneWeights, ConvStackSpec, build_backbone
from .data import Batch, DatasetManifest, DegradationSpec
from .discriminator import DiscriminatorConfig, JointDiscriminator, build_discriminator
from .generator import Generator, GeneratorConfig, build_generator
from .losses import LossWeights
from .metrics import psnr, ssim
from .training import TrainConfig, Trainer, ablation_variant, train

__all__ = [
    "Backbone",
    "BackboneWeights",
    "Batch",
    "ConvStackSpec",
    "DatasetManifest",
    "DegradationSpec",
    "DiscriminatorConfig",
    "Generator",
    "GeneratorConfig",
    "JointDiscriminator",
    "LossWeights",
    "TrainConfig",
    "Trainer",
    "ablation_variant",
    "build_backbone",
    "build_discriminator",
    "build_generator",
    "psnr",
    "ssim",
    "train",
]

__version__ = "0.1.0"
