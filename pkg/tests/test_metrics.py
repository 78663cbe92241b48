import numpy as np
import pytest

from segafurn.errors import ShapeMismatch, TooSmall
from segafurn.metrics import psnr, ssim


class TestPSNR:
    def test_identical_capped(self):
        a = np.random.default_rng(0).random((3, 16, 16))
        assert psnr(a, a) == 100.0

    def test_uniform_half_difference(self):
        a = np.zeros((3, 8, 8))
        b = np.full((3, 8, 8), 0.5)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-3)

    def test_one_lsb_difference(self):
        a = np.zeros((3, 8, 8))
        b = np.full((3, 8, 8), 1 / 255)
        assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)

    def test_max_val_scaling(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 127.5)
        assert psnr(a, b, max_val=255.0) == pytest.approx(6.0206, abs=1e-3)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            psnr(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)))


class TestSSIM:
    def test_identical(self):
        a = np.random.default_rng(1).random((3, 32, 32))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_one_vs_zero(self):
        a = np.ones((3, 16, 16))
        b = np.zeros((3, 16, 16))
        c1 = 0.01**2
        assert ssim(a, b) == pytest.approx(c1 / (1 + c1), abs=1e-7)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.random((3, 24, 24))
        b = rng.random((3, 24, 24))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(3)
        a = rng.random((3, 20, 20))
        b = rng.random((3, 20, 20))
        assert -1.0 <= ssim(a, b) <= 1.0

    def test_too_small(self):
        with pytest.raises(TooSmall):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ssim(np.zeros((3, 16, 16)), np.zeros((3, 16, 17)))

    def test_grayscale_input(self):
        a = np.random.default_rng(4).random((16, 16))
        assert ssim(a, a) == pytest.approx(1.0)
