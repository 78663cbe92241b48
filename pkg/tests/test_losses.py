import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from segafurn.errors import EmptyBatch, ShapeMismatch
from segafurn.losses import (
    LossWeights,
    bce_gan_losses,
    lsgan_d_loss,
    perceptual_loss,
    rals_d_loss,
    rals_g_loss,
    relativistic_transform,
    total_g_loss,
)

T = lambda *xs: torch.tensor(xs, dtype=torch.float64)

finite_floats = st.floats(min_value=-100, max_value=100, allow_nan=False)
critic_batches = st.lists(finite_floats, min_size=4, max_size=4)


class TestRelativisticTransform:
    def test_symmetric_constant(self):
        ct_r, ct_f = relativistic_transform(T(3.0, 3.0), T(3.0, 3.0))
        assert torch.all(ct_r == 0) and torch.all(ct_f == 0)

    def test_hand_example(self):
        ct_r, ct_f = relativistic_transform(T(2.0, 0.0), T(1.0, -1.0))
        assert torch.equal(ct_r, T(2.0, 0.0))
        assert torch.equal(ct_f, T(0.0, -2.0))

    def test_uniform_shift_cancels(self):
        c_r, c_f = T(0.3, -1.2), T(0.7, 2.2)
        a = relativistic_transform(c_r, c_f)
        b = relativistic_transform(c_r + 5, c_f + 5)
        assert torch.allclose(a[0], b[0]) and torch.allclose(a[1], b[1])

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            relativistic_transform(torch.tensor([]), torch.tensor([]))

    @given(critic_batches, critic_batches)
    @settings(max_examples=200, deadline=None)
    def test_antisymmetry_of_means(self, real, fake):
        ct_r, ct_f = relativistic_transform(T(*real), T(*fake))
        assert abs(ct_r.mean().item() + ct_f.mean().item()) <= 1e-9 * (
            1 + abs(ct_r.mean().item())
        )


class TestRaLSLosses:
    def test_zero_inputs_forced_value(self):
        z = torch.zeros(4, dtype=torch.float64)
        assert rals_d_loss(z, z).item() == 2.0
        assert rals_g_loss(z, z).item() == 2.0

    def test_d_hand_example(self):
        assert rals_d_loss(T(2.0, 0.0), T(0.0, -2.0)).item() == pytest.approx(2.0, abs=1e-12)

    def test_d_optimum(self):
        assert rals_d_loss(T(1.0, 1.0), T(-1.0, -1.0)).item() == 0.0

    def test_g_hand_example(self):
        assert rals_g_loss(T(2.0, 0.0), T(0.0, -2.0)).item() == pytest.approx(10.0, abs=1e-12)

    def test_g_optimum(self):
        assert rals_g_loss(T(-1.0), T(1.0)).item() == 0.0

    def test_swap_relation(self):
        a, b = T(0.4, -2.1, 0.9), T(1.3, 0.2, -0.7)
        assert rals_g_loss(a, b).item() == rals_d_loss(b, a).item()

    @given(critic_batches, critic_batches, st.floats(-50, 50, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_shift_invariance(self, real, fake, k):
        c_r, c_f = T(*real), T(*fake)
        base_d = rals_d_loss(*relativistic_transform(c_r, c_f)).item()
        base_g = rals_g_loss(*relativistic_transform(c_r, c_f)).item()
        shift_d = rals_d_loss(*relativistic_transform(c_r + k, c_f + k)).item()
        shift_g = rals_g_loss(*relativistic_transform(c_r + k, c_f + k)).item()
        assert abs(base_d - shift_d) <= 1e-9 * (1 + abs(base_d))
        assert abs(base_g - shift_g) <= 1e-9 * (1 + abs(base_g))

    @given(critic_batches, critic_batches)
    @settings(max_examples=100, deadline=None)
    def test_non_negative(self, real, fake):
        ct = relativistic_transform(T(*real), T(*fake))
        assert rals_d_loss(*ct).item() >= 0
        assert rals_g_loss(*ct).item() >= 0


class TestLSGAN:
    def test_label_targets(self):
        assert lsgan_d_loss(T(1.0), T(0.0)).item() == 0.0

    def test_reversed_inputs(self):
        assert lsgan_d_loss(T(0.0), T(1.0)).item() == pytest.approx(2.0, abs=1e-12)

    def test_midpoint(self):
        assert lsgan_d_loss(T(0.5), T(0.5)).item() == pytest.approx(0.5, abs=1e-12)


class TestBCE:
    def test_zero_logits(self):
        l_d, l_g = bce_gan_losses(T(0.0), T(0.0))
        assert l_d.item() == pytest.approx(2 * math.log(2), abs=1e-12)
        assert l_g.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_saturated_classifier(self):
        l_d, _ = bce_gan_losses(T(20.0), T(-20.0))
        assert l_d.item() == pytest.approx(0.0, abs=1e-6)

    def test_extreme_logits_stay_finite(self):
        l_d, l_g = bce_gan_losses(T(-1000.0), T(1000.0))
        assert math.isfinite(l_d.item()) and math.isfinite(l_g.item())

    @given(critic_batches, critic_batches)
    @settings(max_examples=100, deadline=None)
    def test_non_negative(self, real, fake):
        l_d, l_g = bce_gan_losses(T(*real), T(*fake))
        assert l_d.item() >= 0 and l_g.item() >= 0


class TestPerceptual:
    def test_identical_maps(self):
        x = torch.rand(2, 4, 4, dtype=torch.float64)
        assert perceptual_loss(x, x).item() == 0.0

    def test_ones_vs_zeros(self):
        a = torch.ones(1, 2, 2, dtype=torch.float64)
        b = torch.zeros(1, 2, 2, dtype=torch.float64)
        assert perceptual_loss(a, b).item() == 1.0

    def test_quadratic_homogeneity(self):
        a = torch.rand(3, 5, 5, dtype=torch.float64)
        b = torch.rand(3, 5, 5, dtype=torch.float64)
        base = perceptual_loss(a, b).item()
        assert perceptual_loss(3 * a, 3 * b).item() == pytest.approx(9 * base, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            perceptual_loss(torch.rand(1, 2, 2), torch.rand(1, 3, 3))


class TestTotal:
    def test_default_weights_value(self):
        assert total_g_loss(0.5, 2.0) == pytest.approx(0.502, abs=1e-12)

    def test_zero_adv_weight(self):
        w = LossWeights(lambda_con=1.0, lambda_adv=0.0)
        assert total_g_loss(0.37, 99.0, w) == pytest.approx(0.37, abs=1e-15)

    def test_all_zero(self):
        assert total_g_loss(0.0, 0.0) == 0.0


class TestGradients:
    def make_inputs(self, seed):
        g = torch.Generator().manual_seed(seed)
        c_r = torch.randn(4, generator=g, dtype=torch.float64, requires_grad=True)
        c_f = torch.randn(4, generator=g, dtype=torch.float64, requires_grad=True)
        return c_r, c_f

    def fd_check(self, fn, seed=0):
        c_r, c_f = self.make_inputs(seed)
        loss = fn(c_r, c_f)
        loss.backward()
        eps = 1e-7
        zero = torch.zeros(4, dtype=torch.float64)
        for t, grad in ((c_r, c_r.grad), (c_f, c_f.grad)):
            if grad is None:  # loss independent of this input
                grad = zero
            for i in range(4):
                with torch.no_grad():
                    orig = t[i].item()
                    t[i] = orig + eps
                    lp = fn(c_r, c_f).item()
                    t[i] = orig - eps
                    lm = fn(c_r, c_f).item()
                    t[i] = orig
                fd = (lp - lm) / (2 * eps)
                assert abs(fd - grad[i].item()) <= 1e-6 * max(1.0, abs(fd))

    def test_rals_d(self):
        self.fd_check(lambda r, f: rals_d_loss(*relativistic_transform(r, f)), 1)

    def test_rals_g(self):
        self.fd_check(lambda r, f: rals_g_loss(*relativistic_transform(r, f)), 2)

    def test_lsgan_d(self):
        self.fd_check(lsgan_d_loss, 3)

    def test_bce_d(self):
        self.fd_check(lambda r, f: bce_gan_losses(r, f)[0], 4)

    def test_bce_g(self):
        self.fd_check(lambda r, f: bce_gan_losses(r, f)[1], 5)

    def test_perceptual(self):
        g = torch.Generator().manual_seed(6)
        a = torch.randn(2, 3, 3, generator=g, dtype=torch.float64, requires_grad=True)
        b = torch.randn(2, 3, 3, generator=g, dtype=torch.float64)
        perceptual_loss(a, b).backward()
        eps = 1e-7
        idx = (1, 2, 2)
        with torch.no_grad():
            orig = a[idx].item()
            a[idx] = orig + eps
            lp = perceptual_loss(a, b).item()
            a[idx] = orig - eps
            lm = perceptual_loss(a, b).item()
            a[idx] = orig
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - a.grad[idx].item()) <= 1e-6 * max(1.0, abs(fd))
