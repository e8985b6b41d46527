"""Dense 4-axis tensors with reverse-mode automatic differentiation.

Every value in the package is a `Tensor`: a contiguous row-major array of
shape (batch, channel, height, width). Scalars (losses) are tensors of
shape (1, 1, 1, 1). Operations build a define-by-run graph that is
discarded after each backward pass; `no_grad()` suppresses recording.

The default element type is float32. float64 tensors are supported so
that finite-difference gradient checks have numerical headroom; binary
operations require both operands to share a dtype.
"""

from __future__ import annotations

import struct

import numpy as np

from . import backend

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class no_grad:
    """Context manager that disables graph recording inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def grad_enabled():
    return _grad_enabled


class Tensor:
    """A (n, c, h, w) array plus optional gradient buffer and graph links."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are 4-axis (n,c,h,w); got shape {arr.shape}")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad=False, dtype=None):
        dtype = dtype or DEFAULT_DTYPE
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad, dtype=dtype)

    @staticmethod
    def full(shape, value, dtype=None):
        dtype = dtype or DEFAULT_DTYPE
        return Tensor(np.full(shape, value, dtype=dtype), dtype=dtype)

    @staticmethod
    def scalar(value, dtype=None):
        dtype = dtype or DEFAULT_DTYPE
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype), dtype=dtype)

    # -- basic protocol --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """The underlying array (shared, not copied)."""
        return self.data

    def detach(self):
        """Same data, no graph links, no gradient requirement."""
        return Tensor(self.data, requires_grad=False, dtype=self.dtype)

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def __repr__(self):
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if self._parents:
            flags.append(f"op={self.op}")
        tail = (", " + ", ".join(flags)) if flags else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{tail})"

    # operators are thin wrappers over the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def backward(self, graph=None):
        backward(self, graph)


def _record(data, parents, backward_fn, op=None):
    """Wrap raw output data in a Tensor, attaching graph links when recording.

    `backward_fn(gout)` must return one gradient array per parent (or None
    for parents that need no gradient).
    """
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_fn
        out.op = op
    return out


class Graph:
    """Topologically ordered list of the recorded operations reaching a root.

    Rebuilt per forward pass; `nodes` holds output tensors whose `_parents`
    reference their inputs, in an order where inputs always precede users.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        nodes = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in visited or node._backward is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        return cls(nodes)

    def __len__(self):
        return len(self.nodes)


def backward(loss, graph=None):
    """Accumulate reverse-mode gradients of a scalar loss into requires_grad
    tensors. Repeated calls accumulate; callers zero gradients themselves."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss; got shape {loss.shape}")
    if graph is None:
        graph = Graph.trace(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad:
        loss.ensure_grad()[...] += 1.0
    for node in reversed(graph.nodes):
        gout = grads.pop(id(node), None)
        if gout is None:
            continue
        for parent, g in zip(node._parents, node._backward(gout)):
            if g is None:
                continue
            if parent.requires_grad:
                parent.ensure_grad()[...] += g
            if parent._backward is not None:
                acc = grads.get(id(parent))
                if acc is None:
                    grads[id(parent)] = g if g.flags.owndata else g.copy()
                else:
                    acc += g


# -- elementwise and broadcast arithmetic --------------------------------------


def _check_binary(a, b, op):
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g, shape):
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    _check_binary(a, b, "add")
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b):
    _check_binary(a, b, "sub")
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b):
    _check_binary(a, b, "mul")
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def scalar_mul(a, s):
    s = float(s)
    return _record(a.data * np.array(s, dtype=a.dtype), (a,), lambda g: (g * s,), "scalar_mul")


def relu(a):
    return _record(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),), "relu")


def leaky_relu(a, slope=0.1):
    slope = float(slope)
    out = np.where(a.data > 0, a.data, a.data * np.array(slope, dtype=a.dtype))
    return _record(out, (a,), lambda g: (g * np.where(a.data > 0, 1.0, slope).astype(a.dtype),), "leaky_relu")


def abs_(a):
    # subgradient at 0 is defined as 0 (np.sign(0) == 0)
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def dropout(a, p, rng, training):
    """Zero each element with probability p and scale survivors by 1/(1-p).

    Evaluation mode (training=False) is the identity. `rng` is required in
    training mode whenever p > 0.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0,1); got {p}")
    if not training or p == 0.0:
        return _record(a.data.copy(), (a,), lambda g: (g,), "dropout_eval")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(a.shape) >= p).astype(a.dtype)
    scale = np.array(1.0 / (1.0 - p), dtype=a.dtype)
    mask = keep * scale
    return _record(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


def concat_channels(a, b):
    if a.dtype != b.dtype:
        raise ShapeError("concat_channels: dtype mismatch")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    ca = a.shape[1]
    return _record(
        np.concatenate((a.data, b.data), axis=1),
        (a, b),
        lambda g: (g[:, :ca], g[:, ca:]),
        "concat",
    )


# -- reductions -----------------------------------------------------------------


def mean_all(a):
    if a.size == 0:
        raise ShapeError("mean of an empty tensor")
    m = a.data.mean(dtype=a.dtype)
    inv = 1.0 / a.size
    return _record(
        np.full((1, 1, 1, 1), m, dtype=a.dtype),
        (a,),
        lambda g: (np.broadcast_to(g * np.array(inv, dtype=a.dtype), a.shape),),
        "mean_all",
    )


def mean_over_axes(a, axes):
    """Mean over the listed axes (0=batch .. 3=width); reduced axes keep
    extent 1 so the result stays 4-axis."""
    if a.size == 0:
        raise ShapeError("mean of an empty tensor")
    axes = tuple(sorted(set(int(ax) for ax in axes)))
    if any(ax < 0 or ax > 3 for ax in axes):
        raise ShapeError(f"axes must be within 0..3; got {axes}")
    out = a.data.mean(axis=axes, keepdims=True, dtype=a.dtype)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    inv = 1.0 / count
    return _record(
        out,
        (a,),
        lambda g: (np.broadcast_to(g * np.array(inv, dtype=a.dtype), a.shape),),
        "mean_over_axes",
    )


def l1_distance(a, b):
    """Mean absolute difference over all elements (normalized L1)."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance: shapes differ {a.shape} vs {b.shape}")
    return mean_all(abs_(sub(a, b)))


# -- convolution ------------------------------------------------------------------


def conv2d(x, weight, bias=None, stride=1, dilation=1, padding=0):
    """2-D cross-correlation with zero padding.

    weight is (out_c, in_c, k, k) with k odd; bias, when given, is a
    (1, out_c, 1, 1) tensor added per output channel. Output spatial extent
    is floor((h + 2*padding - dilation*(k-1) - 1)/stride) + 1.
    """
    n, cin, h, w = x.shape
    cout, win, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size; got {kh}x{kw}")
    if win != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {win}")
    if x.dtype != weight.dtype:
        raise ShapeError("conv2d: dtype mismatch between input and weight")
    if stride < 1 or dilation < 1 or padding < 0:
        raise ShapeError("conv2d: stride/dilation must be >= 1 and padding >= 0")
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - dilation * (kh - 1) - 1) // stride + 1
    wo = (wp - dilation * (kw - 1) - 1) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel span exceeds padded input ({hp}x{wp})")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    y = backend.conv2d_forward(xp, weight.data, stride, dilation)

    if bias is not None:
        if bias.shape != (1, cout, 1, 1):
            raise ShapeError(f"bias must have shape (1,{cout},1,1); got {bias.shape}")
        if bias.dtype != x.dtype:
            raise ShapeError("conv2d: dtype mismatch between input and bias")
        y += bias.data

    need_gx = x.requires_grad or bool(x._parents)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if not g.flags.writeable:
            g = g.copy()
        if need_gx:
            gxp = backend.conv2d_backward_input(g, weight.data, stride, dilation, hp, wp)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        else:
            gx = None
        gw = backend.conv2d_backward_weight(g, xp, stride, dilation, kh, kw)
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(y, parents, bwd, "conv2d")


# -- raw tensor file format (T32) ---------------------------------------------

T32_MAGIC = b"T32\0"


def t32_encode(tensor):
    """Serialize to bytes: magic, four little-endian uint64 extents, then
    row-major little-endian float32 data."""
    arr = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    if arr.ndim != 4:
        raise ShapeError(f"T32 stores 4-axis tensors; got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return T32_MAGIC + struct.pack("<4Q", *arr.shape) + arr.tobytes()


def t32_decode(buf, offset=0):
    """Parse one T32 record from a bytes-like; returns (float32 array, end)."""
    if buf[offset : offset + 4] != T32_MAGIC:
        raise ValueError(f"not a T32 record at offset {offset} (magic {buf[offset:offset + 4]!r})")
    shape = struct.unpack_from("<4Q", buf, offset + 4)
    count = int(np.prod(shape))
    end = offset + 36 + 4 * count
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset + 36)
    if data.size != count or end > len(buf):
        raise ValueError("truncated T32 payload")
    return data.reshape(shape).astype(np.float32), end


def save_t32(path, tensor):
    with open(path, "wb") as fh:
        fh.write(t32_encode(tensor))


def load_t32(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        arr, _ = t32_decode(buf)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    return Tensor(arr)
