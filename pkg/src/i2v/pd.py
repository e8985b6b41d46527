"""Pixel-shuffle downsampling (PD) with permutable sampling orders.

For stride s, PD rearranges an image into an s x s grid of sub-images,
one per sampling phase. Phase p = a*s + b collects pixels (a + s*u,
b + s*v). With the identity order, grid block k holds phase k (the
classic order-invariant layout); a shuffled order assigns block k the
phase perm[k], which is the order-variant form used as training
augmentation. Both directions are exact pixel permutations, so gradients
pass through as the inverse gather.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _record


@dataclass(frozen=True)
class ShuffleOrder:
    """A stride factor plus a bijection grid-block index -> phase index."""

    stride: int
    perm: tuple

    def __post_init__(self):
        s = self.stride
        if s < 1:
            raise ValueError(f"stride must be >= 1; got {s}")
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(s * s)):
            raise ValueError(f"perm must be a bijection on 0..{s * s - 1}; got {perm}")
        object.__setattr__(self, "perm", perm)

    @staticmethod
    def identity(s):
        return ShuffleOrder(s, tuple(range(s * s)))

    def transpose(self):
        """The inverse assignment; transpose(transpose(o)) == o."""
        inv = [0] * len(self.perm)
        for k, p in enumerate(self.perm):
            inv[p] = k
        return ShuffleOrder(self.stride, tuple(inv))

    def is_identity(self):
        return all(k == p for k, p in enumerate(self.perm))


def random_order(s, rng):
    """Uniformly random ShuffleOrder for stride s (Fisher-Yates shuffle)."""
    if s < 1:
        raise ValueError(f"stride must be >= 1; got {s}")
    return ShuffleOrder(s, tuple(int(v) for v in rng.permutation(s * s)))


def _check_divisible(shape, s):
    _, _, h, w = shape
    if h % s or w % s:
        raise ShapeError(f"spatial extents ({h},{w}) must be divisible by stride {s}")


def _rearrange_forward(arr, s, perm):
    n, c, h, w = arr.shape
    hs, ws = h // s, w // s
    # (n,c,h,w) -> phases stacked on one axis: phase a*s+b at index [.., a, b]
    t = arr.reshape(n, c, hs, s, ws, s).transpose(0, 1, 3, 5, 2, 4)
    phases = t.reshape(n, c, s * s, hs, ws)
    blocks = phases[:, :, perm]
    out = blocks.reshape(n, c, s, s, hs, ws).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(out.reshape(n, c, h, w))


def _rearrange_inverse(arr, s, perm):
    n, c, h, w = arr.shape
    hs, ws = h // s, w // s
    blocks = arr.reshape(n, c, s, hs, s, ws).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, s * s, hs, ws)
    phases = np.empty_like(blocks)
    phases[:, :, list(perm)] = blocks
    t = phases.reshape(n, c, s, s, hs, ws).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(t.reshape(n, c, h, w))


def pd_forward(x, order):
    """Rearrange x into the s x s mosaic of phase sub-images given by order.

    Stride 1 is the identity map. The same order is applied to every
    sample in the batch.
    """
    s, perm = order.stride, order.perm
    _check_divisible(x.shape, s)
    if s == 1:
        return _record(x.data.copy(), (x,), lambda g: (g,), "pd_forward")
    out = _rearrange_forward(x.data, s, perm)
    return _record(out, (x,), lambda g: (_rearrange_inverse(g, s, perm),), "pd_forward")


def pd_inverse(y, order_t):
    """Undo pd_forward; exact inverse when order_t = order.transpose()."""
    s = order_t.stride
    _check_divisible(y.shape, s)
    perm = order_t.transpose().perm
    if s == 1:
        return _record(y.data.copy(), (y,), lambda g: (g,), "pd_inverse")
    out = _rearrange_inverse(y.data, s, perm)
    return _record(out, (y,), lambda g: (_rearrange_forward(g, s, perm),), "pd_inverse")


def wrapped_apply(net, x, order):
    """Apply a same-shape network in PD space: PD -> net -> inverse PD."""
    y = net(pd_forward(x, order))
    if not isinstance(y, Tensor) or y.shape != x.shape:
        raise ShapeError("wrapped_apply needs a net mapping tensors to same-shape tensors")
    return pd_inverse(y, order.transpose())
