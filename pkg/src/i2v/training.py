"""Optimization: rectified Adam, milestone learning-rate schedule, patch
augmentation, and the joint training loop for f and h."""

from __future__ import annotations

import csv
import os
from bisect import bisect_right
from dataclasses import dataclass, field, asdict

import numpy as np

from .losses import LossWeights, loss_total
from .networks import BlindSpotNet, NoiseExtractor, save_checkpoint
from .tensor import ShapeError, Tensor


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    milestones: tuple = (200, 280)
    decay: float = 0.1
    batch: int = 2
    patch: int = 500
    epochs: int = 300
    patches_per_image: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    crop: bool = True
    rotate: bool = True
    mirror: bool = True
    bsn_base: int = 16
    ne_width: int = 32
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only

    def __post_init__(self):
        if self.patch % 10:
            raise ValueError(f"patch must be divisible by 10 (loss stride lcm); got {self.patch}")
        ms = tuple(self.milestones)
        if any(a >= b for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing; got {ms}")
        self.milestones = ms

    @staticmethod
    def desk(**overrides):
        """Small-everything defaults that train in minutes on one CPU core.

        The learning rate is raised to 2e-3: with only hundreds of steps
        instead of hundreds of thousands, the full-scale 1e-4 leaves the
        networks badly underfit.
        """
        values = dict(patch=40, batch=4, epochs=250, lr0=2e-3)
        values.update(overrides)
        return TrainConfig(**values)

    def to_json_dict(self):
        d = asdict(self)
        d["weights"] = asdict(self.weights)
        d["milestones"] = list(self.milestones)
        return d


@dataclass
class RAdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def radam_step(params, grads, state, lr):
    """One rectified-Adam update over every named parameter.

    Bias-corrected first moment always drives the step; the adaptive
    (variance-normalized) form engages only once the rectification term
    rho_t exceeds 4, otherwise the step is plain momentum SGD.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive; got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    rho_t = rho_inf - 2.0 * t * b2**t / bias2
    if rho_t > 4.0:
        rect = np.sqrt(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
        )
    else:
        rect = None
    for name, tensor in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bias1
        if rect is None:
            tensor.data -= lr * m_hat
        else:
            denom = np.sqrt(v / bias2) + state.eps
            tensor.data -= (lr * rect) * m_hat / denom


def lr_at(epoch, cfg):
    """Piecewise-constant schedule: lr0 times decay per passed milestone."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0; got {epoch}")
    return cfg.lr0 * cfg.decay ** bisect_right(cfg.milestones, epoch)


def augment(image, rng, cfg):
    """Random crop to patch size, then optional 90-degree rotation and mirror.

    With every flag off this is the deterministic top-left crop. Draw order
    is fixed (crop offsets, rotation k, two mirror flags) so a seeded rng
    reproduces the schedule.
    """
    _, _, h, w = image.shape
    p = cfg.patch
    if h < p or w < p:
        raise ShapeError(f"image {h}x{w} smaller than patch {p}")
    if cfg.crop:
        top = int(rng.integers(0, h - p + 1))
        left = int(rng.integers(0, w - p + 1))
    else:
        top = left = 0
    out = image.data[:, :, top : top + p, left : left + p]
    if cfg.rotate:
        k = int(rng.integers(0, 4))
        if k:
            out = np.rot90(out, k, axes=(2, 3))
    if cfg.mirror:
        if rng.integers(0, 2):
            out = out[:, :, :, ::-1]
        if rng.integers(0, 2):
            out = out[:, :, ::-1, :]
    return Tensor(np.ascontiguousarray(out), dtype=image.dtype)


def steps_per_epoch(dataset, cfg):
    # one epoch = one pass over the patch-sampling schedule
    return max(1, len(dataset) * cfg.patches_per_image)


def train(f, h, dataset, cfg, out_dir=None, log_every=0):
    """Joint training of f and h from a list of ImageRecord.

    Per step: sample `batch` images with replacement, augment each into a
    patch, evaluate the total loss, backpropagate once, and apply one
    optimizer step per network. Returns the list of per-step log rows.
    A non-finite loss aborts after saving the last good parameters.
    """
    if not dataset:
        raise ValueError("train needs a non-empty dataset")
    rng = np.random.default_rng(cfg.seed)
    opt_f, opt_h = RAdamState(), RAdamState()
    rows = []
    spe = steps_per_epoch(dataset, cfg)
    step = 0
    ckpt_path = os.path.join(out_dir, "checkpoint.i2vc") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        for _ in range(spe):
            idx = rng.integers(0, len(dataset), size=cfg.batch)
            patches = [augment(dataset[int(i)].noisy, rng, cfg) for i in idx]
            xb = Tensor(np.concatenate([p.data for p in patches], axis=0))
            report = loss_total(f, h, xb, cfg.weights, rng, training=True)
            if not np.isfinite(report.total):
                if ckpt_path:
                    save_checkpoint(ckpt_path, f, h)
                _write_log(out_dir, rows)
                raise FloatingPointError(
                    f"non-finite loss at step {step}; last good parameters "
                    + (f"saved to {ckpt_path}" if ckpt_path else "kept in memory")
                )
            f.params.zero_grad()
            h.params.zero_grad()
            report.root.backward()
            radam_step(f.params, _grads(f.params), opt_f, lr)
            radam_step(h.params, _grads(h.params), opt_h, lr)
            rows.append([step, epoch, lr] + report.row())
            step += 1
            if log_every and step % log_every == 0:
                print(
                    f"step {step} epoch {epoch} lr {lr:.2e} total {report.total:.5f} "
                    f"(s {report.s:.5f} r {report.r:.5f} ov {report.ov:.5f} np {report.np:.5f})",
                    flush=True,
                )
        if ckpt_path and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(ckpt_path, f, h)
    if ckpt_path:
        save_checkpoint(ckpt_path, f, h)
    _write_log(out_dir, rows)
    return rows


def _grads(params):
    return {name: tensor.ensure_grad() for name, tensor in params.items()}


def _write_log(out_dir, rows):
    if not out_dir:
        return
    path = os.path.join(out_dir, "train_log.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "lr", "loss_s", "loss_r", "loss_ov", "loss_np", "total"])
        writer.writerows(rows)


def create_networks(cfg, rng):
    f = BlindSpotNet.create(rng, base=cfg.bsn_base)
    h = NoiseExtractor.create(rng, width=cfg.ne_width)
    return f, h
