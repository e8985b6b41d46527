"""Inference schemes: stride-2 baseline, direct noise-extractor denoising,
their blend, and the two random-replacing refinements R3 and PR3.

PR3 needs no downsampling at all: Bernoulli random replacement already
breaks spatial noise correlation, so f and h run on full-resolution mixtures.
Per image it costs one f pass and two h passes, versus R3's T f passes over
its baseline. Outputs are never clamped here; clamping happens at export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .networks import ne_forward
from .pd import ShuffleOrder, wrapped_apply
from .tensor import ShapeError, Tensor, add, mul, no_grad, scalar_mul, sub

INFER_STRIDE = 2


@dataclass(frozen=True)
class BinaryMask:
    """A {0,1} gating tensor plus the Bernoulli probability it was drawn with."""

    tensor: Tensor
    p: float

    def __post_init__(self):
        vals = self.tensor.data
        if not np.all((vals == 0) | (vals == 1)):
            raise ValueError("mask entries must be exactly 0 or 1")

    @staticmethod
    def sample(shape, p, rng, dtype=np.float32):
        """Independent Bernoulli(p) entries; 1 keeps the first operand."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"mask probability must be in (0,1); got {p}")
        data = (rng.random(shape) < p).astype(dtype)
        return BinaryMask(Tensor(data, dtype=dtype), p)


@dataclass(frozen=True)
class InferenceConfig:
    p1: float = 0.4
    p2: float = 0.4
    r3_repetitions: int = 8
    r3_probability: float = 0.16
    seed: int = 0

    def __post_init__(self):
        for name in ("p1", "p2", "r3_probability"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0,1); got {v}")
        if self.r3_repetitions < 1:
            raise ValueError(f"r3_repetitions must be >= 1; got {self.r3_repetitions}")


def _mask_tensor(mask):
    t = mask.tensor if isinstance(mask, BinaryMask) else mask
    return t


def random_replace(mask, x, y_prime):
    """mask*x + (1-mask)*y'; mask entries of 1 keep x's pixel."""
    m = _mask_tensor(mask)
    if x.shape != y_prime.shape:
        raise ShapeError(f"random_replace: shapes differ {x.shape} vs {y_prime.shape}")
    for dm, dx in zip(m.shape, x.shape):
        if dm != dx and dm != 1:
            raise ShapeError(f"random_replace: mask shape {m.shape} does not gate {x.shape}")
    one_minus = sub(Tensor.full(m.shape, 1.0, dtype=m.dtype.type), m)
    return add(mul(m, x), mul(one_minus, y_prime))


def baseline_apbsn(f, x):
    """Stride-2 identity-order wrapped f: the asymmetric-stride baseline."""
    with no_grad():
        return wrapped_apply(f, x, ShuffleOrder.identity(INFER_STRIDE))


def ne_denoise(h, x):
    """Primary prediction of the noise extractor: x - h(x)."""
    with no_grad():
        return sub(x, ne_forward(h, x, training=False))


def blend_i2vb(f, h, x):
    """Unweighted mean of the baseline and the noise-extractor prediction."""
    with no_grad():
        return scalar_mul(add(baseline_apbsn(f, x), ne_denoise(h, x)), 0.5)


def r3(f, x, p, T, rng, masks=None):
    """Random-replacing refinement: average T re-denoised Bernoulli mixtures
    of x into the stride-2 baseline. f runs on the mixtures WITHOUT
    downsampling (replacement already decorrelates the noise)."""
    if T < 1:
        raise ValueError(f"r3 needs T >= 1; got {T}")
    if masks is not None and len(masks) != T:
        raise ValueError(f"r3 got {len(masks)} masks for T={T}")
    with no_grad():
        y0 = baseline_apbsn(f, x)
        acc = None
        for t in range(T):
            mask = masks[t] if masks is not None else BinaryMask.sample(x.shape, p, rng, x.dtype.type)
            yt = f(random_replace(mask, x, y0))
            acc = yt if acc is None else add(acc, yt)
        return scalar_mul(acc, 1.0 / T)


def pr3(f, h, x, cfg, rng, masks=None):
    """Progressive random-replacing refinement.

    y_hat = x - h(x); f refines a Bernoulli mixture of x and y_hat; h then
    re-extracts noise from a second mixture, and replaced pixels take the
    re-denoised value. The output is the mean of y_hat and that final image.
    One f call and two h calls, no downsampling, no divisibility demands.
    `masks` may pin the two Bernoulli realizations (m1, m2) for verification.
    """
    with no_grad():
        y_hat = sub(x, ne_forward(h, x, training=False))
        if masks is not None:
            m1, m2 = masks
        else:
            m1 = BinaryMask.sample(x.shape, cfg.p1, rng, x.dtype.type)
            m2 = BinaryMask.sample(x.shape, cfg.p2, rng, x.dtype.type)
        y_bsn = f(random_replace(m1, x, y_hat))
        n_ne = ne_forward(h, random_replace(m2, x, y_bsn), training=False)
        m2t = _mask_tensor(m2)
        one_minus = sub(Tensor.full(m2t.shape, 1.0, dtype=m2t.dtype.type), m2t)
        y_ne = add(mul(one_minus, y_bsn), mul(m2t, sub(x, n_ne)))
        return scalar_mul(add(y_hat, y_ne), 0.5)


class CallCounter:
    """Wraps a network, counting forward calls; used to verify scheme cost."""

    def __init__(self, net):
        self.net = net
        self.calls = 0

    def __call__(self, *args, **kwargs):
        self.calls += 1
        return self.net(*args, **kwargs)

    def reset(self):
        self.calls = 0


def sweep_pr3(f, h, dataset, p1_grid, p2_grid, seed=0):
    """Mean PSNR/SSIM of pr3 over a clean-paired dataset for each (p1, p2).

    Returns a list of dict rows; every cell reuses the same per-image seeds
    so grid points differ only in probabilities.
    """
    from .metrics import psnr, ssim

    p1_grid, p2_grid = list(p1_grid), list(p2_grid)
    if not p1_grid or not p2_grid:
        raise ValueError("sweep_pr3 needs non-empty probability grids")
    records = [rec for rec in dataset if rec.clean is not None]
    if not records:
        raise ValueError("sweep_pr3 needs records with clean references")
    rows = []
    for p1 in p1_grid:
        for p2 in p2_grid:
            cfg = InferenceConfig(p1=p1, p2=p2)
            psnrs, ssims = [], []
            for i, rec in enumerate(records):
                out = pr3(f, h, rec.noisy, cfg, np.random.default_rng(seed + i))
                psnrs.append(psnr(out, rec.clean))
                ssims.append(ssim(out, rec.clean))
            rows.append(
                {
                    "p1": p1,
                    "p2": p2,
                    "psnr": float(np.mean(psnrs)),
                    "ssim": float(np.mean(ssims)),
                }
            )
    return rows
