"""Image I/O, dataset handling, and a synthetic spatially-correlated noise
generator so the whole pipeline can be validated without camera data.

Noise model: per-channel Gaussian noise with optional signal-dependent
std, smoothed by a small normalized kernel. Any kernel wider than 1x1
makes neighboring noise values correlated (adjacent 3x3 box windows share
6 of 9 taps, so lag-1 autocorrelation is 2/3), which is exactly the
structure stride-s downsampling with s >= k breaks apart.
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from . import backend
from .tensor import Tensor


@dataclass
class ImageRecord:
    id: str
    noisy: Tensor
    clean: Optional[Tensor] = None


@dataclass(frozen=True, eq=False)
class NoiseModel:
    sigma: float = 0.1
    kernel: np.ndarray = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0; got {self.sigma}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0; got {self.gamma}")
        k = self.kernel if self.kernel is not None else box_kernel(3)
        k = np.asarray(k, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd size; got shape {k.shape}")
        if np.any(k < 0) or not np.isclose(k.sum(), 1.0, atol=1e-6):
            raise ValueError("kernel entries must be >= 0 and sum to 1")
        object.__setattr__(self, "kernel", k)


def box_kernel(k):
    return np.full((k, k), 1.0 / (k * k))


def identity_kernel():
    return np.ones((1, 1))


def add_correlated_noise(clean, model, rng):
    """clean + smoothed Gaussian noise, unclamped.

    The raw field is N(0, (sigma*(1+gamma*clean))^2) per element; smoothing
    convolves it with the model kernel (zero-padded same-size). The
    smoothed noise std is sigma times the kernel's l2 norm when gamma=0.
    """
    data = clean.data
    std = model.sigma * (1.0 + model.gamma * data)
    n0 = rng.standard_normal(data.shape) * std
    k = model.kernel.shape[0]
    if k == 1:
        noise = n0 * model.kernel[0, 0]
    else:
        pad = k // 2
        n, c, h, w = data.shape
        flat = n0.reshape(n * c, 1, h, w)
        padded = np.pad(flat, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        weight = model.kernel.reshape(1, 1, k, k)
        noise = backend.conv2d_forward(np.ascontiguousarray(padded), np.ascontiguousarray(weight), 1, 1)
        noise = noise.reshape(n, c, h, w)
    return Tensor((data.astype(np.float64) + noise).astype(data.dtype), dtype=data.dtype)


def make_synthetic_clean(h, w, rng):
    """A smooth random test image: per-channel gradients, Gaussian blobs,
    and one soft disc edge, normalized into [0.05, 0.95]."""
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij")
    img = np.empty((1, 3, h, w), dtype=np.float64)
    for c in range(3):
        a, bx, by = rng.uniform(-0.5, 0.5, size=3)
        img[0, c] = a + bx * xx + by * yy
    n_blobs = int(rng.integers(4, 8))
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0.0, 1.0, size=2)
        sigma = rng.uniform(0.12, 0.35)
        amp = rng.uniform(-0.6, 0.6, size=3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        for c in range(3):
            img[0, c] += amp[c] * blob
    # one soft-edged disc so the content is not purely low-frequency; the
    # edge stays wide enough to survive stride-5 subsampling unaliased
    cy, cx = rng.uniform(0.2, 0.8, size=2)
    radius = rng.uniform(0.15, 0.35)
    softness = rng.uniform(0.06, 0.12)
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    disc = 1.0 / (1.0 + np.exp((dist - radius) / softness))
    amp = rng.uniform(-0.4, 0.4, size=3)
    for c in range(3):
        img[0, c] += amp[c] * disc
    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)
    return Tensor(img.astype(np.float32))


def load_png(path):
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise ValueError(f"{path}: only 8-bit RGB PNG is supported (mode {im.mode})")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    data = arr.transpose(2, 0, 1)[None, :, :, :]
    record_id = os.path.splitext(os.path.basename(path))[0]
    return ImageRecord(id=record_id, noisy=Tensor(np.ascontiguousarray(data)))


def save_png(tensor, path):
    """Clamp to [0,1], quantize to 8-bit, write RGB PNG."""
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    if data.ndim != 4 or data.shape[0] != 1 or data.shape[1] != 3:
        raise ValueError(f"save_png needs a (1,3,h,w) tensor; got shape {data.shape}")
    arr = np.clip(data[0], 0.0, 1.0)
    quant = np.rint(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(quant, mode="RGB").save(path, format="PNG")


def make_dataset(directory, pattern="*.png", with_clean=False, log=None):
    """Deterministic (lexicographic) list of ImageRecord from a directory.

    Clean references pair by the `<id>.clean.png` convention; files matching
    that convention are never treated as noisy inputs themselves.
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"dataset directory {directory!r} does not exist")
    paths = sorted(glob.glob(os.path.join(directory, pattern)))
    paths = [p for p in paths if not p.endswith(".clean.png")]
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r} in {directory!r}")
    records = []
    for path in paths:
        record = load_png(path)
        if with_clean:
            clean_path = os.path.join(directory, record.id + ".clean.png")
            if os.path.exists(clean_path):
                record.clean = load_png(clean_path).noisy
            elif log is not None:
                log(f"no clean partner for {record.id}")
        records.append(record)
    return records
