"""PSNR and SSIM image quality metrics (float images in [0, 1])."""
import math

import numpy as np
from scipy.signal import convolve2d

from .errors import ShapeMismatch, TooSmall

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b, max_val=1.0):
    """Peak signal-to-noise ratio in dB, capped at 100 for near-zero MSE."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(max_val**2 / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=0)
    return img


def ssim(a, b, data_range=1.0):
    """Windowed SSIM on the channel-mean grayscale image.

    11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03; the score is the
    mean over all fully-covered window positions.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    x = _to_gray(a)
    y = _to_gray(b)
    if min(x.shape) < SSIM_WINDOW:
        raise TooSmall(f"image {x.shape} smaller than {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    sxx = convolve2d(x * x, w, mode="valid") - mu_x**2
    syy = convolve2d(y * y, w, mode="valid") - mu_y**2
    sxy = convolve2d(x * y, w, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
