"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Fallback backend used when the compiled extension is not built. All
functions operate on pre-padded inputs; zero padding is applied by the
caller (see tensor.conv2d). Shapes follow the (batch, channel, height,
width) layout used everywhere in the package.
"""

import numpy as np


def _out_extent(padded, k, stride, dilation):
    return (padded - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp, kh, kw, stride, dilation, ho, wo):
    n, cin, _, _ = xp.shape
    col = np.empty((cin, kh, kw, n, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            view = xp[
                :,
                :,
                i * dilation : i * dilation + (ho - 1) * stride + 1 : stride,
                j * dilation : j * dilation + (wo - 1) * stride + 1 : stride,
            ]
            col[:, i, j] = view.transpose(1, 0, 2, 3)
    return col


def conv2d_forward(xp, w, stride, dilation):
    """Cross-correlation of a padded input with a (cout,cin,kh,kw) kernel."""
    n, cin, hp, wp = xp.shape
    cout, _, kh, kw = w.shape
    ho = _out_extent(hp, kh, stride, dilation)
    wo = _out_extent(wp, kw, stride, dilation)
    col = _im2col(xp, kh, kw, stride, dilation, ho, wo)
    y = w.reshape(cout, cin * kh * kw) @ col.reshape(cin * kh * kw, n * ho * wo)
    return np.ascontiguousarray(y.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))


def conv2d_backward_input(gy, w, stride, dilation, hp, wp):
    """Gradient w.r.t. the padded input (col2im scatter-add)."""
    n, cout, ho, wo = gy.shape
    _, cin, kh, kw = w.shape
    gy_mat = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(cout, -1)
    gcol = (w.reshape(cout, -1).T @ gy_mat).reshape(cin, kh, kw, n, ho, wo)
    gxp = np.zeros((n, cin, hp, wp), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[
                :,
                :,
                i * dilation : i * dilation + (ho - 1) * stride + 1 : stride,
                j * dilation : j * dilation + (wo - 1) * stride + 1 : stride,
            ] += gcol[:, i, j].transpose(1, 0, 2, 3)
    return gxp


def conv2d_backward_weight(gy, xp, stride, dilation, kh, kw):
    """Gradient w.r.t. the convolution kernel."""
    n, cout, ho, wo = gy.shape
    _, cin, _, _ = xp.shape
    col = _im2col(xp, kh, kw, stride, dilation, ho, wo)
    gy_mat = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(cout, -1)
    gw = gy_mat @ col.reshape(cin * kh * kw, -1).T
    return gw.reshape(cout, cin, kh, kw)
