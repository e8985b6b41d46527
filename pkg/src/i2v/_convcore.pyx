# Compiled convolution kernels (hot path of network training/inference).
#
# Same contracts as i2v._conv_numpy: inputs are pre-padded, writable,
# C-contiguous (batch, channel, height, width), float32 or float64. All
# loops run on raw pointers so the C compiler can vectorize the stride-1
# row operations (SAXPY for forward/input-grad, dot for the weight grad);
# stride 1 is the only stride the bundled networks use, but the general
# case is handled by the scalar fallback loops.

import numpy as np

cimport cython


ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, :, ::1] xp, real[:, :, :, ::1] w,
                   int stride, int dilation):
    cdef Py_ssize_t n = xp.shape[0], cin = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (hp - dilation * (kh - 1) - 1) // stride + 1
    cdef Py_ssize_t wo = (wp - dilation * (kw - 1) - 1) // stride + 1

    if real is float:
        out = np.zeros((n, cout, ho, wo), dtype=np.float32)
    else:
        out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    cdef real[:, :, :, ::1] y = out

    cdef const real* xb = &xp[0, 0, 0, 0]
    cdef const real* wb = &w[0, 0, 0, 0]
    cdef real* yb = &y[0, 0, 0, 0]
    cdef const real* xr
    cdef const real* wr
    cdef real* yr
    cdef real wv, w0, w1, w2
    cdef Py_ssize_t b, o, c, i, j, yo, xo, d = dilation
    with nogil:
        for b in range(n):
            for o in range(cout):
                for yo in range(ho):
                    yr = yb + ((b * cout + o) * ho + yo) * wo
                    for c in range(cin):
                        for i in range(kh):
                            xr = xb + ((b * cin + c) * hp + yo * stride + i * dilation) * wp
                            wr = wb + ((o * cin + c) * kh + i) * kw
                            if stride == 1 and kw == 3:
                                # one fused pass over the row for all three taps
                                w0 = wr[0]; w1 = wr[1]; w2 = wr[2]
                                for xo in range(wo):
                                    yr[xo] += w0 * xr[xo] + w1 * xr[xo + d] + w2 * xr[xo + 2 * d]
                            elif stride == 1:
                                for j in range(kw):
                                    wv = wr[j]
                                    for xo in range(wo):
                                        yr[xo] += wv * xr[xo + j * d]
                            else:
                                for j in range(kw):
                                    wv = wr[j]
                                    for xo in range(wo):
                                        yr[xo] += wv * xr[xo * stride + j * d]
    return out


def conv2d_backward_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                          int stride, int dilation,
                          Py_ssize_t hp, Py_ssize_t wp):
    cdef Py_ssize_t n = gy.shape[0], cout = gy.shape[1]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t cin = w.shape[1], kh = w.shape[2], kw = w.shape[3]

    if real is float:
        out = np.zeros((n, cin, hp, wp), dtype=np.float32)
    else:
        out = np.zeros((n, cin, hp, wp), dtype=np.float64)
    cdef real[:, :, :, ::1] gxp = out

    cdef const real* gyb = &gy[0, 0, 0, 0]
    cdef const real* wb = &w[0, 0, 0, 0]
    cdef real* gxb = &gxp[0, 0, 0, 0]
    cdef const real* gyr
    cdef real* gxr
    cdef real wv
    cdef Py_ssize_t b, o, c, i, j, yo, xo
    with nogil:
        for b in range(n):
            for o in range(cout):
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            wv = wb[((o * cin + c) * kh + i) * kw + j]
                            for yo in range(ho):
                                gyr = gyb + ((b * cout + o) * ho + yo) * wo
                                gxr = gxb + ((b * cin + c) * hp + yo * stride + i * dilation) * wp + j * dilation
                                if stride == 1:
                                    for xo in range(wo):
                                        gxr[xo] += wv * gyr[xo]
                                else:
                                    for xo in range(wo):
                                        gxr[xo * stride] += wv * gyr[xo]
    return out


def conv2d_backward_weight(real[:, :, :, ::1] gy, real[:, :, :, ::1] xp,
                           int stride, int dilation,
                           Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = gy.shape[0], cout = gy.shape[1]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t cin = xp.shape[1], hp = xp.shape[2], wp = xp.shape[3]

    if real is float:
        out = np.zeros((cout, cin, kh, kw), dtype=np.float32)
    else:
        out = np.zeros((cout, cin, kh, kw), dtype=np.float64)
    cdef real[:, :, :, ::1] gw = out

    cdef const real* gyb = &gy[0, 0, 0, 0]
    cdef const real* xb = &xp[0, 0, 0, 0]
    cdef const real* gyr
    cdef const real* xr
    # per-row partial sums accumulate into doubles to keep the float32
    # path's truncation error close to the blocked-GEMM fallback's
    cdef double acc, acc0, acc1, acc2
    cdef real rowacc, r0, r1, r2, gv
    cdef Py_ssize_t b, o, c, i, j, yo, xo, d = dilation
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    if stride == 1 and kw == 3:
                        # all three taps share one pass over each row pair
                        acc0 = 0.0; acc1 = 0.0; acc2 = 0.0
                        for b in range(n):
                            for yo in range(ho):
                                gyr = gyb + ((b * cout + o) * ho + yo) * wo
                                xr = xb + ((b * cin + c) * hp + yo + i * d) * wp
                                r0 = 0; r1 = 0; r2 = 0
                                for xo in range(wo):
                                    gv = gyr[xo]
                                    r0 = r0 + gv * xr[xo]
                                    r1 = r1 + gv * xr[xo + d]
                                    r2 = r2 + gv * xr[xo + 2 * d]
                                acc0 += r0; acc1 += r1; acc2 += r2
                        gw[o, c, i, 0] = <real> acc0
                        gw[o, c, i, 1] = <real> acc1
                        gw[o, c, i, 2] = <real> acc2
                        continue
                    for j in range(kw):
                        acc = 0.0
                        for b in range(n):
                            for yo in range(ho):
                                gyr = gyb + ((b * cout + o) * ho + yo) * wo
                                xr = xb + ((b * cin + c) * hp + yo * stride + i * d) * wp + j * d
                                rowacc = 0
                                if stride == 1:
                                    for xo in range(wo):
                                        rowacc = rowacc + gyr[xo] * xr[xo]
                                else:
                                    for xo in range(wo):
                                        rowacc = rowacc + gyr[xo] * xr[xo * stride]
                                acc += rowacc
                        gw[o, c, i, j] = <real> acc
    return out
