"""Adversarial training loop: alternating D/G updates, checkpoints, variants."""
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses, tensorio
from .backbone import Backbone, BackboneWeights, ConvStackSpec
from .data import DegradationSpec, iterate_batches
from .discriminator import DiscriminatorConfig, JointDiscriminator
from .errors import InvalidConfig, IoError, NonFiniteLoss, UnknownVariant
from .generator import Generator, GeneratorConfig
from .losses import LossWeights

CHECKPOINT_PREFIX = "ckpt"
LOSS_LOG_NAME = "loss_log.json"


@dataclass(frozen=True)
class VariantSpec:
    name: str
    adv_loss: str  # "bce" or "rals"
    use_semantics: bool


VARIANTS = {
    "ridb": VariantSpec("ridb", "bce", False),
    "ridb-rals": VariantSpec("ridb-rals", "rals", False),
    "ridb-se": VariantSpec("ridb-se", "bce", True),
    "full": VariantSpec("full", "rals", True),
}


def ablation_variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise UnknownVariant(
            f"unknown variant '{name}'; expected one of {sorted(VARIANTS)}"
        ) from None


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 4
    steps: int = 100
    scale: int = 4
    hr_size: int = 64
    variant: str = "full"
    seed: int = 0
    checkpoint_every: int = 50
    generator_only: bool = False
    lambda_con: float = 1.0
    lambda_adv: float = 1e-3
    backbone: str = "tiny"  # "tiny" or "vgg19"
    backbone_seed: int = 0
    separate_lr_encoder: bool = False  # independent weights for the LR-side encoder
    backbone_weights_dir: str = ""
    perceptual_tap: str = ""
    generator: GeneratorConfig = field(default_factory=GeneratorConfig.tiny)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self):
        if self.generator.scale != self.scale:
            self.generator = dataclasses.replace(self.generator, scale=self.scale)

    def loss_weights(self):
        return LossWeights(self.lambda_con, self.lambda_adv)

    def degradation(self):
        return DegradationSpec(scale=self.scale)

    def backbone_spec(self):
        if self.backbone == "tiny":
            return ConvStackSpec.tiny()
        if self.backbone == "vgg19":
            return ConvStackSpec.vgg19()
        raise InvalidConfig(f"unknown backbone '{self.backbone}'")

    def to_dict(self):
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "generator" in d and isinstance(d["generator"], dict):
            d["generator"] = GeneratorConfig(**d["generator"])
        if "discriminator" in d and isinstance(d["discriminator"], dict):
            d["discriminator"] = DiscriminatorConfig(
                **{
                    k: tuple(v) if isinstance(v, list) else v
                    for k, v in d["discriminator"].items()
                }
            )
        return cls(**d)

    def fingerprint(self):
        variant = ablation_variant(self.variant)
        payload = {
            "config": _jsonable(self.to_dict()),
            "adv_loss": variant.adv_loss,
            "use_semantics": variant.use_semantics,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _module_hash(module):
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class Trainer:
    """Owns the generator, discriminator, frozen backbone, and optimizers."""

    def __init__(self, cfg):
        cfg.generator.validate()
        self.cfg = cfg
        self.variant = ablation_variant(cfg.variant)
        torch.manual_seed(cfg.seed)
        spec = cfg.backbone_spec()
        if cfg.backbone_weights_dir:
            bw = BackboneWeights(source="external-file", path=cfg.backbone_weights_dir)
        else:
            bw = BackboneWeights(seed=cfg.backbone_seed)
        self.backbone = Backbone(spec, bw)
        if cfg.separate_lr_encoder:
            lr_bw = BackboneWeights(seed=cfg.backbone_seed + 1)
            self.lr_encoder = Backbone(spec, lr_bw)
        else:
            self.lr_encoder = self.backbone
        self.perceptual_tap = cfg.perceptual_tap or spec.default_perceptual_tap()
        self.generator = Generator(cfg.generator, seed=cfg.seed)
        disc_cfg = dataclasses.replace(
            cfg.discriminator,
            use_semantics=self.variant.use_semantics,
            semantic_channels=spec.semantic_channels,
        )
        self.discriminator = JointDiscriminator(disc_cfg, seed=cfg.seed + 1)
        adam_kw = dict(lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2))
        self.opt_g = torch.optim.Adam(self.generator.parameters(), **adam_kw)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), **adam_kw)
        self.weights = cfg.loss_weights()
        self.step = 0
        self.loss_log = []

    def _semantics(self, hr, lr):
        if not self.variant.use_semantics:
            return None, None
        with torch.no_grad():
            return self.backbone.encode_semantics(hr), self.lr_encoder.encode_semantics(lr)

    def _adv_d_loss(self, c_real, c_fake):
        if self.variant.adv_loss == "rals":
            ct_r, ct_f = losses.relativistic_transform(c_real, c_fake)
            return losses.rals_d_loss(ct_r, ct_f)
        l_d, _ = losses.bce_gan_losses(c_real, c_fake)
        return l_d

    def _adv_g_loss(self, c_real, c_fake):
        if self.variant.adv_loss == "rals":
            ct_r, ct_f = losses.relativistic_transform(c_real, c_fake)
            return losses.rals_g_loss(ct_r, ct_f)
        _, l_g = losses.bce_gan_losses(c_real, c_fake)
        return l_g

    def _perceptual(self, hr, sr):
        with torch.no_grad():
            f_hr = self.backbone.extract_features(hr, self.perceptual_tap)
        f_sr = self.backbone.extract_features(sr, self.perceptual_tap)
        return losses.perceptual_loss(f_hr, f_sr)

    def train_step(self, batch):
        """One discriminator update followed by one generator update."""
        hr = torch.as_tensor(batch.hr, dtype=torch.float32)
        lr = torch.as_tensor(batch.lr, dtype=torch.float32)
        record = {"step": self.step}
        if self.cfg.generator_only:
            self.generator.train()
            sr = self.generator(lr)
            l_p = self._perceptual(hr, sr)
            l_total = self.weights.lambda_con * l_p
            self.opt_g.zero_grad()
            l_total.backward()
            self.opt_g.step()
            record.update(l_perceptual=float(l_p.detach()), l_total=float(l_total.detach()))
        else:
            e_hr, e_lr = self._semantics(hr, lr)
            self.generator.train()
            self.discriminator.train()
            sr = self.generator(lr)
            # discriminator update on detached generator output
            c_real = self.discriminator(hr, e_hr)
            c_fake = self.discriminator(sr.detach(), e_lr)
            l_d = self._adv_d_loss(c_real, c_fake)
            self.opt_d.zero_grad()
            l_d.backward()
            self.opt_d.step()
            # generator update through the updated discriminator
            c_real = self.discriminator(hr, e_hr)
            c_fake = self.discriminator(sr, e_lr)
            l_g_adv = self._adv_g_loss(c_real, c_fake)
            l_p = self._perceptual(hr, sr)
            l_total = losses.total_g_loss(l_p, l_g_adv, self.weights)
            self.opt_g.zero_grad()
            l_total.backward()
            self.opt_g.step()
            record.update(
                l_d=float(l_d.detach()),
                l_g_adv=float(l_g_adv.detach()),
                l_perceptual=float(l_p.detach()),
                l_total=float(l_total.detach()),
            )
        for key, val in record.items():
            if key != "step" and not np.isfinite(val):
                raise NonFiniteLoss(f"{key} became non-finite at step {self.step}: {val}")
        self.step += 1
        self.loss_log.append(record)
        return record

    def fit(self, manifest, out_dir=None, steps=None):
        """Run train_step over batches, checkpointing every cfg.checkpoint_every."""
        steps = steps if steps is not None else self.cfg.steps
        stream = iterate_batches(
            manifest, self.cfg.batch_size, self.cfg.degradation(), self.cfg.seed
        )
        # fast-forward a resumed run to its position in the batch stream
        for _ in range(self.step):
            next(stream)
        while self.step < steps:
            self.train_step(next(stream))
            if out_dir and (
                self.step % self.cfg.checkpoint_every == 0 or self.step == steps
            ):
                self.save_checkpoint(os.path.join(out_dir, f"{CHECKPOINT_PREFIX}_{self.step:06d}"))
                self._write_loss_log(out_dir)
        if out_dir:
            final = os.path.join(out_dir, f"{CHECKPOINT_PREFIX}_{self.step:06d}")
            if not os.path.isdir(final):
                self.save_checkpoint(final)
            self._write_loss_log(out_dir)
        return self.loss_log

    def _write_loss_log(self, out_dir):
        try:
            with open(os.path.join(out_dir, LOSS_LOG_NAME), "w") as f:
                json.dump(self.loss_log, f, indent=1)
        except OSError as e:
            raise IoError(f"cannot write loss log: {e}") from e

    # -- checkpointing ------------------------------------------------------

    def _optimizer_tensors(self, opt, prefix):
        out = {}
        state = opt.state_dict()["state"]
        for pid, pstate in state.items():
            for key, val in pstate.items():
                if torch.is_tensor(val):
                    out[f"{prefix}/{pid}/{key}"] = val.detach().cpu().numpy()
                else:
                    out[f"{prefix}/{pid}/{key}"] = np.asarray([float(val)])
        return out

    def save_checkpoint(self, dirpath):
        tensors = {}
        for name, t in self.generator.state_dict().items():
            tensors[f"g/{name}"] = t.detach().cpu().numpy()
        for name, t in self.discriminator.state_dict().items():
            tensors[f"d/{name}"] = t.detach().cpu().numpy()
        tensors.update(self._optimizer_tensors(self.opt_g, "opt_g"))
        tensors.update(self._optimizer_tensors(self.opt_d, "opt_d"))
        extra = {
            "step": self.step,
            "config": _jsonable(self.cfg.to_dict()),
            "fingerprint": self.cfg.fingerprint(),
            "rng_state": torch.get_rng_state().numpy().tobytes().hex(),
            "loss_log": self.loss_log,
        }
        tensorio.save_tensors(dirpath, tensors, extra=extra)

    def _restore_optimizer(self, opt, prefix, tensors, ref_params):
        sd = opt.state_dict()
        state = {}
        keys = sorted(
            {k.split("/")[1] for k in tensors if k.startswith(prefix + "/")}, key=int
        )
        for pid_s in keys:
            pid = int(pid_s)
            pstate = {}
            for k, v in tensors.items():
                parts = k.split("/")
                if parts[0] == prefix and parts[1] == pid_s:
                    name = parts[2]
                    if name == "step":
                        pstate[name] = torch.tensor(float(np.asarray(v).reshape(-1)[0]))
                    else:
                        pstate[name] = torch.from_numpy(np.ascontiguousarray(v))
            state[pid] = pstate
        sd["state"] = state
        opt.load_state_dict(sd)

    @classmethod
    def load_checkpoint(cls, dirpath):
        tensors, extra = tensorio.load_tensors(dirpath)
        cfg = TrainConfig.from_dict(extra["config"])
        trainer = cls(cfg)
        g_sd = {}
        d_sd = {}
        for k, v in tensors.items():
            arr = torch.from_numpy(np.ascontiguousarray(v))
            if k.startswith("g/"):
                g_sd[k[2:]] = arr
            elif k.startswith("d/"):
                d_sd[k[2:]] = arr
        missing = [
            f"g/{n}" for n in trainer.generator.state_dict() if n not in g_sd
        ] + [f"d/{n}" for n in trainer.discriminator.state_dict() if n not in d_sd]
        if missing:
            raise IoError(f"checkpoint missing tensors: {missing[:5]}")
        # num_batches_tracked is stored as float32; restore integer dtype
        for sd, module in ((g_sd, trainer.generator), (d_sd, trainer.discriminator)):
            ref = module.state_dict()
            for name in sd:
                sd[name] = sd[name].to(ref[name].dtype)
            module.load_state_dict(sd)
        trainer._restore_optimizer(trainer.opt_g, "opt_g", tensors, None)
        trainer._restore_optimizer(trainer.opt_d, "opt_d", tensors, None)
        trainer.step = int(extra["step"])
        trainer.loss_log = list(extra.get("loss_log", []))
        torch.set_rng_state(
            torch.frombuffer(bytearray.fromhex(extra["rng_state"]), dtype=torch.uint8).clone()
        )
        return trainer

    def parameter_hashes(self):
        return {
            "generator": _module_hash(self.generator),
            "discriminator": _module_hash(self.discriminator),
        }


def latest_checkpoint(out_dir):
    ckpts = sorted(
        d for d in os.listdir(out_dir) if d.startswith(CHECKPOINT_PREFIX + "_")
    )
    if not ckpts:
        raise IoError(f"no checkpoints under {out_dir}")
    return os.path.join(out_dir, ckpts[-1])


def train(cfg, manifest, out_dir, resume=False):
    """Train from scratch or resume from the latest checkpoint in out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    if resume:
        trainer = Trainer.load_checkpoint(latest_checkpoint(out_dir))
        # the step budget may be extended on resume; model/optimizer
        # hyperparameters stay as checkpointed
        trainer.cfg.steps = cfg.steps
        trainer.cfg.checkpoint_every = cfg.checkpoint_every
    else:
        trainer = Trainer(cfg)
    trainer.fit(manifest, out_dir=out_dir)
    return trainer
