"""Self-supervised blind denoising of spatially-correlated image noise.

Two networks trained jointly from noisy images alone: a blind-spot network
f wrapped in invertible pixel-shuffle downsampling, and a full-resolution
noise extractor h supervised by f's pseudo-noise residual. Inference uses
progressive random-replacing refinement, which needs one f pass and two h
passes per image and no downsampling.
"""

from . import backend
from .data_noise import (
    ImageRecord,
    NoiseModel,
    add_correlated_noise,
    box_kernel,
    load_png,
    make_dataset,
    make_synthetic_clean,
    save_png,
)
from .inference import (
    BinaryMask,
    CallCounter,
    InferenceConfig,
    baseline_apbsn,
    blend_i2vb,
    ne_denoise,
    pr3,
    r3,
    random_replace,
    sweep_pr3,
)
from .losses import LossReport, LossWeights, loss_np, loss_ov, loss_r, loss_s, loss_total
from .metrics import noise_histogram, noise_map_per_stride, psnr, ssim
from .networks import (
    BlindSpotNet,
    NetworkParams,
    NoiseExtractor,
    bsn_forward,
    init_params,
    load_checkpoint,
    ne_forward,
    save_checkpoint,
)
from .pd import ShuffleOrder, pd_forward, pd_inverse, random_order, wrapped_apply
from .tensor import Graph, ShapeError, Tensor, conv2d, load_t32, no_grad, save_t32
from .training import RAdamState, TrainConfig, augment, lr_at, radam_step, train

__version__ = "0.1.0"

__all__ = [
    "backend",
    "ImageRecord",
    "NoiseModel",
    "add_correlated_noise",
    "box_kernel",
    "load_png",
    "make_dataset",
    "make_synthetic_clean",
    "save_png",
    "BinaryMask",
    "CallCounter",
    "InferenceConfig",
    "baseline_apbsn",
    "blend_i2vb",
    "ne_denoise",
    "pr3",
    "r3",
    "random_replace",
    "sweep_pr3",
    "LossReport",
    "LossWeights",
    "loss_np",
    "loss_ov",
    "loss_r",
    "loss_s",
    "loss_total",
    "noise_histogram",
    "noise_map_per_stride",
    "psnr",
    "ssim",
    "BlindSpotNet",
    "NetworkParams",
    "NoiseExtractor",
    "bsn_forward",
    "init_params",
    "load_checkpoint",
    "ne_forward",
    "save_checkpoint",
    "ShuffleOrder",
    "pd_forward",
    "pd_inverse",
    "random_order",
    "wrapped_apply",
    "Graph",
    "ShapeError",
    "Tensor",
    "conv2d",
    "load_t32",
    "no_grad",
    "save_t32",
    "RAdamState",
    "TrainConfig",
    "augment",
    "lr_at",
    "radam_step",
    "train",
    "__version__",
]
