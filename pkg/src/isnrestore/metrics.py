"""PSNR / SSIM and the spatial + frequency L1 training objective."""

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, SizeError
from .imaging import Image, rgb_to_y
from .tensor import dft2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LOSS_LAMBDA = 0.1


def _pixels(x):
    return x.pixels if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}", axis="shape")


def psnr(a, b, channel_mode="rgb"):
    """Peak signal-to-noise ratio in dB for [0,1] data; ``inf`` for identical inputs."""
    a, b = _pixels(a), _pixels(b)
    _same_shape(a, b)
    if channel_mode == "y":
        a, b = rgb_to_y(a), rgb_to_y(b)
    elif channel_mode != "rgb":
        raise ValueError(f"unknown channel mode {channel_mode!r}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(1.0 / math.sqrt(mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _as_plane(x):
    px = _pixels(x)
    if px.ndim == 4:
        px = rgb_to_y(px) if px.shape[1] == 3 else px
        px = px[0, 0]
    elif px.ndim == 3:
        px = rgb_to_y(px)[0, 0] if px.shape[0] == 3 else px[0]
    return px


def ssim(a, b):
    """Mean structural similarity over all valid 11x11 Gaussian windows (data range 1)."""
    a, b = _as_plane(a), _as_plane(b)
    _same_shape(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise SizeError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = gaussian_window()

    def filt(z):
        return np.tensordot(sliding_window_view(z, win.shape), win, axes=([2, 3], [0, 1]))

    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def composite_loss(pred, target, lam=LOSS_LAMBDA):
    """Returns (total, spatial, frequency): mean |diff| + lam * mean |DFT(diff)|."""
    p, t = _pixels(pred), _pixels(target)
    _same_shape(p, t)
    spatial = float(np.mean(np.abs(p - t)))
    re_p, im_p = dft2d(p)
    re_t, im_t = dft2d(t)
    freq = float(np.mean(np.hypot(re_p - re_t, im_p - im_t)))
    return spatial + lam * freq, spatial, freq


@dataclass
class EvalReport:
    psnr_rgb: float
    psnr_y: float
    ssim_y: float
    loss_spatial: float
    loss_freq: float
    loss_total: float

    @classmethod
    def columns(cls):
        return tuple(f.name for f in fields(cls))

    def values(self):
        return astuple(self)

    def __str__(self):
        return (f"PSNR {self.psnr_rgb:.4f} dB (Y {self.psnr_y:.4f} dB), SSIM(Y) {self.ssim_y:.4f}, "
                f"loss {self.loss_total:.6f} = {self.loss_spatial:.6f} + {LOSS_LAMBDA} * {self.loss_freq:.6f}")


def evaluate(restored, clean, lam=LOSS_LAMBDA):
    total, spatial, freq = composite_loss(restored, clean, lam)
    color = _pixels(clean).shape[1] == 3
    return EvalReport(
        psnr_rgb=psnr(restored, clean),
        psnr_y=psnr(restored, clean, "y") if color else psnr(restored, clean),
        ssim_y=ssim(restored, clean),
        loss_spatial=spatial, loss_freq=freq, loss_total=total,
    )
