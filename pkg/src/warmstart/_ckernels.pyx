# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels (NCHW activations, OIHW kernels).

Same signatures and results as ``_kernels_py``; summation order differs, so
outputs agree to rounding, not bitwise.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef double[:, :, :, ::1] _padded(double[:, :, :, ::1] x, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    xp_arr = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    cdef double[:, :, :, ::1] xp = xp_arr
    cdef Py_ssize_t s, ic, i, j
    with nogil:
        for s in range(n):
            for ic in range(c):
                for i in range(h):
                    for j in range(wd):
                        xp[s, ic, i + pad, j + pad] = x[s, ic, i, j]
    return xp


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                   double[::1] b, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - k) // stride + 1
    cdef double[:, :, :, ::1] xp = _padded(x, pad) if pad else x
    out_arr = np.empty((n, o, ho, wo))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t s, oc, ic, i, j, ki, kj
    cdef double wv, bv
    cdef double* orow
    cdef double* xrow
    with nogil:
        for s in range(n):
            for oc in range(o):
                bv = b[oc]
                for i in range(ho):
                    for j in range(wo):
                        out[s, oc, i, j] = bv
                for ic in range(c):
                    for ki in range(k):
                        for kj in range(k):
                            wv = w[oc, ic, ki, kj]
                            for i in range(ho):
                                orow = &out[s, oc, i, 0]
                                xrow = &xp[s, ic, i * stride + ki, kj]
                                if stride == 1:
                                    for j in range(wo):
                                        orow[j] += wv * xrow[j]
                                else:
                                    for j in range(wo):
                                        orow[j] += wv * xrow[j * stride]
    return out_arr


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, :, ::1] dout, int stride, int pad, bint need_dx=True):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t ho = dout.shape[2], wo = dout.shape[3]
    cdef double[:, :, :, ::1] xp = _padded(x, pad) if pad else x
    dxp_arr = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    dw_arr = np.zeros((o, c, k, k))
    db_arr = np.zeros(o)
    cdef double[:, :, :, ::1] dxp = dxp_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t s, oc, ic, i, j, ki, kj
    cdef double wv, acc
    cdef double* grow
    cdef double* xrow
    cdef double* drow
    with nogil:
        for oc in range(o):
            acc = 0.0
            for s in range(n):
                for i in range(ho):
                    for j in range(wo):
                        acc = acc + dout[s, oc, i, j]
            db[oc] = acc
        for s in range(n):
            for oc in range(o):
                for ic in range(c):
                    for ki in range(k):
                        for kj in range(k):
                            wv = w[oc, ic, ki, kj]
                            acc = 0.0
                            for i in range(ho):
                                grow = &dout[s, oc, i, 0]
                                xrow = &xp[s, ic, i * stride + ki, kj]
                                drow = &dxp[s, ic, i * stride + ki, kj]
                                if stride == 1:
                                    for j in range(wo):
                                        acc = acc + grow[j] * xrow[j]
                                    if need_dx:
                                        for j in range(wo):
                                            drow[j] += grow[j] * wv
                                else:
                                    for j in range(wo):
                                        acc = acc + grow[j] * xrow[j * stride]
                                    if need_dx:
                                        for j in range(wo):
                                            drow[j * stride] += grow[j] * wv
                            dw[oc, ic, ki, kj] += acc
    if not need_dx:
        dx_arr = None
    elif pad:
        dx_arr = np.ascontiguousarray(dxp_arr[:, :, pad:pad + h, pad:pad + wd])
    else:
        dx_arr = dxp_arr
    return dx_arr, dw_arr, db_arr


def maxpool_forward(double[:, :, :, ::1] x, int size):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // size, wo = x.shape[3] // size
    out_arr = np.empty((n, c, ho, wo))
    arg_arr = np.empty((n, c, ho, wo), dtype=np.intp)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t s, ch, i, j, a, bb, best
    cdef double v, m
    with nogil:
        for s in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        m = x[s, ch, i * size, j * size]
                        best = 0
                        for a in range(size):
                            for bb in range(size):
                                v = x[s, ch, i * size + a, j * size + bb]
                                if v > m:
                                    m = v
                                    best = a * size + bb
                        out[s, ch, i, j] = m
                        arg[s, ch, i, j] = best
    return out_arr, arg_arr


def maxpool_backward(double[:, :, :, ::1] dout, Py_ssize_t[:, :, :, ::1] arg,
                     int size, int h, int w):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1]
    cdef Py_ssize_t ho = dout.shape[2], wo = dout.shape[3]
    dx_arr = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t s, ch, i, j, p
    with nogil:
        for s in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        p = arg[s, ch, i, j]
                        dx[s, ch, i * size + p // size, j * size + p % size] = dout[s, ch, i, j]
    return dx_arr
