"""Kernel backend selection.

The convolution kernels exist twice: a Cython extension (i2v._convcore)
and a numpy fallback (i2v._conv_numpy) with identical signatures. The
compiled core is used when it imported successfully; set I2V_KERNELS to
"python" or "compiled" to force a choice (the latter raises if the
extension is missing). `benchmarks/bench_kernels.py` compares the two.
"""

import os

from . import _conv_numpy

try:
    from . import _convcore
except ImportError:  # pure-python install or failed build
    _convcore = None

HAS_COMPILED = _convcore is not None

_IMPLS = {"python": _conv_numpy}
if HAS_COMPILED:
    _IMPLS["compiled"] = _convcore

_active_name = None
_active = None


def use(name):
    """Select the kernel implementation: "python", "compiled", or "auto"."""
    global _active_name, _active
    if name == "auto":
        name = "compiled" if HAS_COMPILED else "python"
    if name not in _IMPLS:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {sorted(_IMPLS)}"
        )
    _active_name = name
    _active = _IMPLS[name]


def active_name():
    return _active_name


def _initial_choice():
    env = os.environ.get("I2V_KERNELS", "auto").lower()
    if env == "auto":
        return "compiled" if HAS_COMPILED else "python"
    return env


use(_initial_choice())


def conv2d_forward(xp, w, stride, dilation):
    return _active.conv2d_forward(xp, w, stride, dilation)


def conv2d_backward_input(gy, w, stride, dilation, hp, wp):
    return _active.conv2d_backward_input(gy, w, stride, dilation, hp, wp)


def conv2d_backward_weight(gy, xp, stride, dilation, kh, kw):
    return _active.conv2d_backward_weight(gy, xp, stride, dilation, kh, kw)
