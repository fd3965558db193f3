# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled memory-movement kernels for the tensor engine.

Every function mirrors one in ``vpx._kernels_py`` and must produce
bit-identical results: accumulation order is part of the contract.
Arrays are rank-5 ``(N, C, S0, S1, S2)``; 2D callers pass ``S0 == 1``.
"""
import numpy as np
cimport numpy as cnp

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, :, ::1] xp, tuple kernel, tuple stride, tuple out, real[:, ::1] cols):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t k0 = kernel[0], k1 = kernel[1], k2 = kernel[2]
    cdef Py_ssize_t s0 = stride[0], s1 = stride[1], s2 = stride[2]
    cdef Py_ssize_t o0 = out[0], o1 = out[1], o2 = out[2]
    cdef Py_ssize_t n, a, b, c, ch, i, j, l, row, col
    row = 0
    for n in range(N):
        for a in range(o0):
            for b in range(o1):
                for c in range(o2):
                    col = 0
                    for ch in range(C):
                        for i in range(k0):
                            for j in range(k1):
                                for l in range(k2):
                                    cols[row, col] = xp[n, ch, a * s0 + i, b * s1 + j, c * s2 + l]
                                    col += 1
                    row += 1
    return np.asarray(cols)


def col2im(real[:, ::1] cols, tuple kernel, tuple stride, tuple out, real[:, :, :, :, ::1] gxp):
    # kernel offset outermost per (n, ch): matches the numpy slice-accumulate order
    cdef Py_ssize_t N = gxp.shape[0], C = gxp.shape[1]
    cdef Py_ssize_t k0 = kernel[0], k1 = kernel[1], k2 = kernel[2]
    cdef Py_ssize_t s0 = stride[0], s1 = stride[1], s2 = stride[2]
    cdef Py_ssize_t o0 = out[0], o1 = out[1], o2 = out[2]
    cdef Py_ssize_t K = k0 * k1 * k2, V = o0 * o1 * o2
    cdef Py_ssize_t n, a, b, c, ch, i, j, l, row, col
    for n in range(N):
        for ch in range(C):
            for i in range(k0):
                for j in range(k1):
                    for l in range(k2):
                        col = ch * K + (i * k1 + j) * k2 + l
                        row = n * V
                        for a in range(o0):
                            for b in range(o1):
                                for c in range(o2):
                                    gxp[n, ch, a * s0 + i, b * s1 + j, c * s2 + l] += cols[row, col]
                                    row += 1
    return np.asarray(gxp)


def maxpool_forward(real[:, :, :, :, ::1] x, tuple window, tuple stride, tuple out,
                    real[:, :, :, :, ::1] y, cnp.int64_t[:, :, :, :, ::1] arg):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t S0 = x.shape[2], S1 = x.shape[3], S2 = x.shape[4]
    cdef Py_ssize_t w0 = window[0], w1 = window[1], w2 = window[2]
    cdef Py_ssize_t s0 = stride[0], s1 = stride[1], s2 = stride[2]
    cdef Py_ssize_t o0 = out[0], o1 = out[1], o2 = out[2]
    cdef Py_ssize_t n, ch, a, b, c, i, j, l, p0, p1, p2, best_idx, base
    cdef real best, v
    for n in range(N):
        for ch in range(C):
            base = (n * C + ch) * S0 * S1 * S2
            for a in range(o0):
                for b in range(o1):
                    for c in range(o2):
                        p0 = a * s0
                        p1 = b * s1
                        p2 = c * s2
                        best = x[n, ch, p0, p1, p2]
                        best_idx = base + (p0 * S1 + p1) * S2 + p2
                        for i in range(w0):
                            for j in range(w1):
                                for l in range(w2):
                                    v = x[n, ch, p0 + i, p1 + j, p2 + l]
                                    if v > best:
                                        best = v
                                        best_idx = base + ((p0 + i) * S1 + p1 + j) * S2 + p2 + l
                        y[n, ch, a, b, c] = best
                        arg[n, ch, a, b, c] = best_idx
    return np.asarray(y), np.asarray(arg)


def maxpool_backward(real[::1] grad_out, cnp.int64_t[::1] arg, real[::1] gx):
    cdef Py_ssize_t k, n = grad_out.shape[0]
    for k in range(n):
        gx[arg[k]] += grad_out[k]
    return np.asarray(gx)
