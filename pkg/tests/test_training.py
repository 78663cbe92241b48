import json
import os

import numpy as np
import pytest
import torch

from segafurn.data import DatasetManifest, DegradationSpec, iterate_batches, synth_dataset
from segafurn.errors import IoError, UnknownVariant
from segafurn.evaluate import evaluate
from segafurn.training import (
    TrainConfig,
    Trainer,
    ablation_variant,
    latest_checkpoint,
    train,
)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("trainds")
    return synth_dataset(8, 64, 7, str(out), test_count=2)


def tiny_cfg(**kw):
    defaults = dict(steps=3, batch_size=2, scale=4, hr_size=64, seed=1, checkpoint_every=2)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestVariants:
    def test_full(self):
        v = ablation_variant("full")
        assert v.adv_loss == "rals" and v.use_semantics

    def test_ridb(self):
        v = ablation_variant("ridb")
        assert v.adv_loss == "bce" and not v.use_semantics

    def test_ridb_rals(self):
        v = ablation_variant("ridb-rals")
        assert v.adv_loss == "rals" and not v.use_semantics

    def test_ridb_se(self):
        v = ablation_variant("ridb-se")
        assert v.adv_loss == "bce" and v.use_semantics

    def test_unknown(self):
        with pytest.raises(UnknownVariant):
            ablation_variant("xyz")

    def test_full_vs_ridb_two_bits(self):
        a, b = ablation_variant("full"), ablation_variant("ridb")
        assert (a.adv_loss != b.adv_loss) and (a.use_semantics != b.use_semantics)


class TestTrainStep:
    def test_zero_lr_leaves_params(self, dataset):
        t = Trainer(tiny_cfg(learning_rate=0.0))

        def params():
            return {
                n: p.detach().clone()
                for m in (t.generator, t.discriminator)
                for n, p in m.named_parameters()
            }

        before = params()
        batch = next(iterate_batches(dataset, 2, DegradationSpec(4), 1))
        rec = t.train_step(batch)
        after = params()
        assert all(torch.equal(before[n], after[n]) for n in before)
        assert all(np.isfinite(v) for k, v in rec.items())

    def test_fixed_seed_identical_records(self, dataset):
        logs = []
        for _ in range(2):
            t = Trainer(tiny_cfg())
            t.fit(dataset, steps=3)
            logs.append(t.loss_log)
        assert logs[0] == logs[1]

    def test_gradients_finite_for_all_tensors(self, dataset):
        t = Trainer(tiny_cfg())
        batch = next(iterate_batches(dataset, 2, DegradationSpec(4), 1))
        t.train_step(batch)
        for name, p in t.generator.named_parameters():
            assert p.grad is not None and torch.isfinite(p.grad).all(), name
        for name, p in t.discriminator.named_parameters():
            assert p.grad is not None and torch.isfinite(p.grad).all(), name

    def test_backbone_untouched_by_training(self, dataset):
        t = Trainer(tiny_cfg())
        before = t.backbone.state_hash()
        t.fit(dataset, steps=2)
        assert t.backbone.state_hash() == before

    def test_generator_only_mode(self, dataset):
        t = Trainer(tiny_cfg(generator_only=True, perceptual_tap="conv1_1"))
        rec = t.train_step(next(iterate_batches(dataset, 2, DegradationSpec(4), 1)))
        assert set(rec) == {"step", "l_perceptual", "l_total"}


class TestTrainLoop:
    def test_smoke_10_steps(self, dataset, tmp_path):
        t = train(tiny_cfg(steps=10), dataset, str(tmp_path))
        assert len(t.loss_log) == 10
        assert all(np.isfinite(r["l_total"]) for r in t.loss_log)
        assert os.path.isfile(tmp_path / "loss_log.json")

    def test_resume_matches_uninterrupted(self, dataset, tmp_path):
        cfg = tiny_cfg(steps=10, checkpoint_every=5)
        full_run = train(cfg, dataset, str(tmp_path / "full"))
        # interrupted run: 5 steps, then resume to 10
        part = Trainer(tiny_cfg(steps=10, checkpoint_every=5))
        part.fit(dataset, out_dir=str(tmp_path / "part"), steps=5)
        resumed = train(cfg, dataset, str(tmp_path / "part"), resume=True)
        assert resumed.step == 10
        assert resumed.parameter_hashes() == full_run.parameter_hashes()
        assert resumed.loss_log == full_run.loss_log

    @pytest.mark.parametrize("variant", ["ridb", "ridb-rals", "ridb-se", "full"])
    def test_all_variants_train_and_evaluate(self, dataset, tmp_path, variant):
        cfg = tiny_cfg(steps=10, variant=variant)
        t = train(cfg, dataset, str(tmp_path))
        report, _ = evaluate(t.generator, dataset, cfg.degradation(), variant=variant)
        assert report.count == 2
        assert np.isfinite(report.mean_psnr)

    def test_variant_fingerprints_distinct(self):
        prints = {tiny_cfg(variant=v).fingerprint() for v in ("ridb", "ridb-rals", "ridb-se", "full")}
        assert len(prints) == 4


class TestCheckpoint:
    def test_roundtrip_hashes(self, dataset, tmp_path):
        t = Trainer(tiny_cfg())
        t.fit(dataset, steps=2)
        t.save_checkpoint(str(tmp_path / "ck"))
        t2 = Trainer.load_checkpoint(str(tmp_path / "ck"))
        assert t2.parameter_hashes() == t.parameter_hashes()
        assert t2.step == 2
        assert t2.loss_log == t.loss_log

    def test_corrupted_checkpoint_names_tensor(self, dataset, tmp_path):
        t = Trainer(tiny_cfg())
        t.save_checkpoint(str(tmp_path / "ck"))
        os.remove(tmp_path / "ck" / "g__sfm.weight.bin")
        with pytest.raises(IoError, match="sfm.weight"):
            Trainer.load_checkpoint(str(tmp_path / "ck"))

    def test_latest_checkpoint(self, dataset, tmp_path):
        cfg = tiny_cfg(steps=4, checkpoint_every=2)
        train(cfg, dataset, str(tmp_path))
        assert latest_checkpoint(str(tmp_path)).endswith("ckpt_000004")

    def test_config_roundtrip(self):
        cfg = tiny_cfg(variant="ridb-se", lambda_adv=0.5)
        back = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back.fingerprint() == cfg.fingerprint()


class TestSeparateLrEncoder:
    def test_shared_by_default(self):
        t = Trainer(tiny_cfg())
        assert t.lr_encoder is t.backbone

    def test_separate_weights_differ(self):
        t = Trainer(tiny_cfg(separate_lr_encoder=True))
        assert t.lr_encoder is not t.backbone
        assert t.lr_encoder.state_hash() != t.backbone.state_hash()
        img = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(0))
        shared = t.backbone.encode_semantics(img)
        separate = t.lr_encoder.encode_semantics(img)
        assert shared.shape == separate.shape
        assert not torch.allclose(shared, separate)

    def test_trains(self, dataset):
        t = Trainer(tiny_cfg(separate_lr_encoder=True, steps=1))
        t.fit(dataset)
        assert t.step == 1
