"""PSNR, SSIM, and noise-map diagnostics (magnitude histograms, per-stride
residual maps)."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import backend
from .networks import ne_forward
from .pd import ShuffleOrder, wrapped_apply
from .tensor import ShapeError, Tensor, no_grad, save_t32

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class MetricRow:
    id: str
    psnr: float
    ssim: float


def _as_array(t):
    return t.data if isinstance(t, Tensor) else np.asarray(t)


def psnr(a, b):
    """10*log10(1/MSE) on the [0,1] range, capped at 99 dB."""
    da, db = _as_array(a), _as_array(b)
    if da.shape != db.shape:
        raise ShapeError(f"psnr: shapes differ {da.shape} vs {db.shape}")
    mse = np.mean((da.astype(np.float64) - db.astype(np.float64)) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _window_filter(gray, win):
    # valid-region weighted local sums via the conv backend
    n = gray.shape[0]
    k = win.shape[0]
    x = np.ascontiguousarray(gray.reshape(n, 1, gray.shape[2], gray.shape[3]))
    w = np.ascontiguousarray(win.reshape(1, 1, k, k))
    return backend.conv2d_forward(x, w, 1, 1)


def ssim(a, b):
    """Mean local SSIM on the channel-mean grayscale with an 11x11 Gaussian
    window (sigma 1.5), valid windows only, [0,1] dynamic range."""
    da, db = _as_array(a), _as_array(b)
    if da.shape != db.shape:
        raise ShapeError(f"ssim: shapes differ {da.shape} vs {db.shape}")
    if da.shape[2] < SSIM_WINDOW or da.shape[3] < SSIM_WINDOW:
        raise ShapeError(f"ssim needs spatial extents >= {SSIM_WINDOW}; got {da.shape[2:]}")
    gx = da.astype(np.float64).mean(axis=1, keepdims=True)
    gy = db.astype(np.float64).mean(axis=1, keepdims=True)
    win = gaussian_window()
    mu_x = _window_filter(gx, win)
    mu_y = _window_filter(gy, win)
    xx = _window_filter(gx * gx, win) - mu_x * mu_x
    yy = _window_filter(gy * gy, win) - mu_y * mu_y
    xy = _window_filter(gx * gy, win) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (xx + yy + SSIM_C2)
    return float(np.mean(num / den))


def noise_histogram(noise, bins, range_max):
    """Histogram of |noise| over uniform bins on [0, range_max]; values past
    range_max land in the last bin. Returns (edges, counts)."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1; got {bins}")
    if range_max <= 0:
        raise ValueError(f"range_max must be positive; got {range_max}")
    mag = np.abs(_as_array(noise)).ravel()
    edges = np.linspace(0.0, range_max, bins + 1)
    idx = np.minimum((mag / (range_max / bins)).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return edges, counts


def noise_map_per_stride(f, h, x, strides, out_dir=None):
    """Residual maps x - wrapped f at each stride (identity order) plus h's
    direct prediction. Optionally exports each as PNG (+0.5 display offset)
    and T32."""
    for s in strides:
        if x.shape[2] % s or x.shape[3] % s:
            raise ShapeError(f"spatial extents {x.shape[2:]} not divisible by stride {s}")
    maps = {}
    with no_grad():
        for s in strides:
            pred = wrapped_apply(f, x, ShuffleOrder.identity(s))
            maps[f"f_s{s}"] = Tensor(x.data - pred.data)
        maps["h"] = ne_forward(h, x, training=False)
    if out_dir is not None:
        from .data_noise import save_png

        os.makedirs(out_dir, exist_ok=True)
        for name, tensor in maps.items():
            save_png(Tensor(tensor.data + 0.5), os.path.join(out_dir, f"noise_{name}.png"))
            save_t32(os.path.join(out_dir, f"noise_{name}.t32"), tensor)
    return maps
