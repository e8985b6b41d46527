"""The two learnable functions: a blind-spot network f and a noise extractor h.

f is J-invariant by construction: a centrally-masked 3x3 input convolution
(the center tap is re-zeroed at every forward, so it can never leak) feeds
two parallel branches of three dilated 3x3 convolutions, one branch at
dilation 2 and one at dilation 3, merged by 1x1 convolutions. Offsets
reachable from an output pixel are ring + multiples of d with d >= 2, which
never sum to zero, so no path connects a pixel to itself. Branches must not
mix dilations (1 + 2 - 3 = 0 would break the property).

h is an unconstrained residual CNN that predicts the noise component at
full resolution, with a single dropout before its last layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    conv2d,
    dropout,
    concat_channels,
    leaky_relu,
    mul,
    t32_decode,
    t32_encode,
)

LEAKY_SLOPE = 0.1


@dataclass(frozen=True)
class ConvSpec:
    """One convolution layer: name plus static shape parameters."""

    name: str
    cin: int
    cout: int
    k: int = 3


class NetworkParams:
    """Ordered, uniquely named parameter tensors with gradient buffers."""

    def __init__(self):
        self._tensors = {}

    def add(self, name, tensor):
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._tensors[name] = tensor

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def n_elements(self):
        return sum(t.size for t in self._tensors.values())


def init_params(spec, rng, dtype=np.float32):
    """He fan-in scaled Gaussian weights, zero biases, for a list of ConvSpec."""
    params = NetworkParams()
    for layer in spec:
        fan_in = layer.cin * layer.k * layer.k
        std = np.sqrt(2.0 / fan_in)
        w = rng.standard_normal((layer.cout, layer.cin, layer.k, layer.k)) * std
        params.add(layer.name + ".w", Tensor(w.astype(dtype), requires_grad=True, dtype=dtype))
        params.add(layer.name + ".b", Tensor.zeros((1, layer.cout, 1, 1), requires_grad=True, dtype=dtype))
    return params


def _conv_layer(params, name, x, padding=0, dilation=1):
    return conv2d(x, params[name + ".w"], params[name + ".b"], dilation=dilation, padding=padding)


class BlindSpotNet:
    """Blind-spot network: prediction at a pixel never reads that pixel."""

    BRANCH_DEPTH = 3
    DILATIONS = (2, 3)

    def __init__(self, params, channels=3, base=16):
        self.params = params
        self.channels = channels
        self.base = base
        self.branch_depth = sum(
            1 for name in params.names() if name.startswith(f"d{self.DILATIONS[0]}_") and name.endswith(".w")
        )
        w = params["mask.w"]
        mask = np.ones(w.shape, dtype=w.dtype)
        k = w.shape[2]
        mask[:, :, k // 2, k // 2] = 0.0
        self._center_mask = Tensor(mask, dtype=w.dtype)

    @staticmethod
    def spec(channels=3, base=16):
        layers = [ConvSpec("mask", channels, base, 3)]
        for d in BlindSpotNet.DILATIONS:
            for i in range(BlindSpotNet.BRANCH_DEPTH):
                layers.append(ConvSpec(f"d{d}_{i}", base, base, 3))
        layers.append(ConvSpec("merge0", base * len(BlindSpotNet.DILATIONS), base, 1))
        layers.append(ConvSpec("merge1", base, base, 1))
        layers.append(ConvSpec("out", base, channels, 1))
        return layers

    @classmethod
    def create(cls, rng, channels=3, base=16, dtype=np.float32):
        return cls(init_params(cls.spec(channels, base), rng, dtype), channels, base)

    @classmethod
    def from_params(cls, params):
        cout, cin, _, _ = params["mask.w"].shape
        return cls(params, channels=cin, base=cout)

    def __call__(self, x):
        if x.shape[1] != self.channels:
            raise ShapeError(f"blind-spot net expects {self.channels} channels; got {x.shape[1]}")
        p = self.params
        # the mask multiply runs every forward, so the center weight is
        # structurally zero (and its gradient is zeroed the same way)
        w0 = mul(p["mask.w"], self._center_mask)
        t = leaky_relu(conv2d(x, w0, p["mask.b"], padding=1), LEAKY_SLOPE)
        branches = []
        for d in self.DILATIONS:
            b = t
            for i in range(self.branch_depth):
                b = leaky_relu(_conv_layer(p, f"d{d}_{i}", b, padding=d, dilation=d), LEAKY_SLOPE)
            branches.append(b)
        m = concat_channels(*branches)
        m = leaky_relu(_conv_layer(p, "merge0", m), LEAKY_SLOPE)
        m = leaky_relu(_conv_layer(p, "merge1", m), LEAKY_SLOPE)
        return _conv_layer(p, "out", m)


class NoiseExtractor:
    """Plain residual CNN predicting the noise map at full resolution."""

    def __init__(self, params, channels=3, width=32, n_res=2, drop_p=0.1):
        self.params = params
        self.channels = channels
        self.width = width
        self.n_res = n_res
        self.drop_p = drop_p

    @staticmethod
    def spec(channels=3, width=32, n_res=2):
        layers = [ConvSpec("head", channels, width, 3)]
        for i in range(n_res):
            layers.append(ConvSpec(f"res{i}_a", width, width, 3))
            layers.append(ConvSpec(f"res{i}_b", width, width, 3))
        layers.append(ConvSpec("tail", width, channels, 3))
        return layers

    @classmethod
    def create(cls, rng, channels=3, width=32, n_res=2, drop_p=0.1, dtype=np.float32):
        return cls(init_params(cls.spec(channels, width, n_res), rng, dtype), channels, width, n_res, drop_p)

    @classmethod
    def from_params(cls, params):
        width, cin, _, _ = params["head.w"].shape
        n_res = sum(1 for name in params.names() if name.startswith("res") and name.endswith("_a.w"))
        return cls(params, channels=cin, width=width, n_res=n_res)

    def __call__(self, x, training=False, rng=None):
        if x.shape[1] != self.channels:
            raise ShapeError(f"noise extractor expects {self.channels} channels; got {x.shape[1]}")
        p = self.params
        t = leaky_relu(_conv_layer(p, "head", x, padding=1), LEAKY_SLOPE)
        for i in range(self.n_res):
            u = leaky_relu(_conv_layer(p, f"res{i}_a", t, padding=1), LEAKY_SLOPE)
            u = _conv_layer(p, f"res{i}_b", u, padding=1)
            t = leaky_relu(add(t, u), LEAKY_SLOPE)
        t = dropout(t, self.drop_p, rng, training)
        return _conv_layer(p, "tail", t, padding=1)


def bsn_forward(f, x):
    return f(x)


def ne_forward(h, x, training=False, rng=None):
    """Dropout-aware call; plain callables (test doubles) are called bare."""
    if isinstance(h, NoiseExtractor):
        return h(x, training=training, rng=rng)
    return h(x)


# -- checkpoint format ----------------------------------------------------------
#
# magic "I2VC", one version byte, then (uint16 LE name length, utf-8 name,
# T32 record) per parameter: all of f's parameters (names prefixed "f.")
# followed by all of h's (prefixed "h.").

CKPT_MAGIC = b"I2VC"
CKPT_VERSION = 1


def save_checkpoint(path, f, h):
    chunks = [CKPT_MAGIC, bytes([CKPT_VERSION])]
    for prefix, net in (("f.", f), ("h.", h)):
        for name, tensor in net.params.items():
            encoded = (prefix + name).encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
            chunks.append(t32_encode(tensor))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Rebuild (f, h) from a checkpoint; architecture is inferred from the
    stored parameter names and shapes."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {buf[:4]!r})")
    version = buf[4]
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version} not supported (expected {CKPT_VERSION})")
    f_params, h_params = NetworkParams(), NetworkParams()
    offset = 5
    while offset < len(buf):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset : offset + name_len].decode("utf-8")
        offset += name_len
        arr, offset = t32_decode(buf, offset)
        tensor = Tensor(arr, requires_grad=True)
        if name.startswith("f."):
            f_params.add(name[2:], tensor)
        elif name.startswith("h."):
            h_params.add(name[2:], tensor)
        else:
            raise ValueError(f"{path}: unknown parameter owner in {name!r}")
    if len(f_params) == 0 or len(h_params) == 0:
        raise ValueError(f"{path}: checkpoint is missing one of the networks")
    return BlindSpotNet.from_params(f_params), NoiseExtractor.from_params(h_params)
