"""Numpy reference kernels; same signatures and results as ``vpx._kernels``.

Arrays are rank-5 ``(N, C, S0, S1, S2)``. Results are bit-identical to the
compiled module because both accumulate in the same order.
"""
import numpy as np
from numpy.lib.stride_tricks import as_strided


def _windows(x, window, stride, out):
    sN, sC, s0, s1, s2 = x.strides
    shape = (x.shape[0], x.shape[1]) + tuple(out) + tuple(window)
    strides = (sN, sC, s0 * stride[0], s1 * stride[1], s2 * stride[2], s0, s1, s2)
    return as_strided(x, shape, strides, writeable=False)


def im2col(xp, kernel, stride, out, cols):
    N, C = xp.shape[:2]
    sN, sC, s0, s1, s2 = xp.strides
    shape = (N,) + tuple(out) + (C,) + tuple(kernel)
    strides = (sN, s0 * stride[0], s1 * stride[1], s2 * stride[2], sC, s0, s1, s2)
    view = as_strided(xp, shape, strides, writeable=False)
    cols[...] = view.reshape(cols.shape)
    return cols


def col2im(cols, kernel, stride, out, gxp):
    N, C = gxp.shape[:2]
    g = cols.reshape((N,) + tuple(out) + (C,) + tuple(kernel))
    o0, o1, o2 = out
    s0, s1, s2 = stride
    for i, j, l in np.ndindex(*kernel):
        gxp[:, :, i:i + s0 * (o0 - 1) + 1:s0, j:j + s1 * (o1 - 1) + 1:s1, l:l + s2 * (o2 - 1) + 1:s2] += (
            g[:, :, :, :, :, i, j, l].transpose(0, 4, 1, 2, 3)
        )
    return gxp


def maxpool_forward(x, window, stride, out, y, arg):
    N, C, S0, S1, S2 = x.shape
    K = int(np.prod(window))
    win = _windows(x, window, stride, out).reshape((N, C) + tuple(out) + (K,))
    local = win.argmax(axis=-1)
    y[...] = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    w0, w1, w2 = window
    i, rem = np.divmod(local, w1 * w2)
    j, l = np.divmod(rem, w2)
    n_idx = np.arange(N).reshape(N, 1, 1, 1, 1)
    c_idx = np.arange(C).reshape(1, C, 1, 1, 1)
    a = np.arange(out[0]).reshape(1, 1, -1, 1, 1) * stride[0]
    b = np.arange(out[1]).reshape(1, 1, 1, -1, 1) * stride[1]
    c = np.arange(out[2]).reshape(1, 1, 1, 1, -1) * stride[2]
    arg[...] = (((n_idx * C + c_idx) * S0 + a + i) * S1 + b + j) * S2 + c + l
    return y, arg


def maxpool_backward(grad_out, arg, gx):
    np.add.at(gx, arg, grad_out)
    return gx
